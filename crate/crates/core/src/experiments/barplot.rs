use std::io::Write;

use serde::Serialize;

use crate::datagen::{sample_gmm, GmmSpec};
use crate::equivalence::check_det_condition;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::solvers::{fit_multiclass_svm, SolverOptions};

pub const BAR_K: usize = 4;
pub const BAR_N: usize = 50;
pub const BAR_P: usize = 1000;
pub const BAR_MU_SCALE: f64 = 0.2;
pub const BAR_PER_CLASS: usize = 2;
const MAX_ATTEMPTS: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BarRow {
    /// Index of the sample in the training set.
    pub sample: usize,
    pub label: usize,
    pub class: usize,
    /// `ŵ_classᵀx_sample`
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct Barplot {
    /// Seed of the dataset that was used.
    pub data_seed: u64,
    /// Datasets drawn before the sign condition held.
    pub attempts: u64,
    pub rows: Vec<BarRow>,
}

impl Barplot {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Multiclass-SVM inner products on a four-class mixture with `n = 50`,
/// `p = 1000`, `‖μ‖ = 0.2√p`, for the first two training samples of each
/// class. Datasets are drawn from seeds derived from `seed` until the sign
/// condition holds, so every emitted value sits at `3/4` or `−1/4`.
pub fn repro_barplot(seed: u64) -> Result<Barplot> {
    let spec = GmmSpec::orthogonal(BAR_K, BAR_P, BAR_MU_SCALE * (BAR_P as f64).sqrt())?;
    let root = Stream::from_seed(seed);
    for attempt in 0..MAX_ATTEMPTS {
        let data_seed = root.derive(&[attempt]).key();
        let data = sample_gmm(&spec, BAR_N, data_seed)?;
        if data.labels.counts().iter().any(|&c| c < BAR_PER_CLASS) {
            continue;
        }
        if !check_det_condition(&data.x, &data.labels)?.verdict {
            continue;
        }
        let fit = fit_multiclass_svm(&data.x, &data.labels, &SolverOptions::default())?;
        let products = fit.classifier.inner_products(&data.x)?;
        let mut rows = Vec::with_capacity(BAR_K * BAR_PER_CLASS * BAR_K);
        for label in 0..BAR_K {
            let picks = (0..BAR_N).filter(|&i| data.labels.get(i) == label).take(BAR_PER_CLASS);
            for i in picks {
                for class in 0..BAR_K {
                    rows.push(BarRow { sample: i, label, class, value: products[(class, i)] });
                }
            }
        }
        return Ok(Barplot { data_seed, attempts: attempt + 1, rows });
    }
    Err(Error::InvalidRegime(format!("sign condition never held in {MAX_ATTEMPTS} draws")))
}

//! Test-error estimation and closed-form error rates.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::datagen::{BilevelParams, GenerativeModel, GmmSpec, MlmSpec};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::Stream;
use crate::solvers::{ClassifierKind, LinearClassifier};

const BATCH: usize = 1024;

/// Predicted label for one point.
pub fn predict(clf: &LinearClassifier, x: &[f64]) -> Result<usize> {
    clf.predict(x)
}

/// Gaussian upper tail `P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorEstimate {
    pub total: f64,
    pub per_class: Vec<f64>,
    pub n_test: usize,
    pub se_total: f64,
    pub se_per_class: Vec<f64>,
    /// Test points per class.
    pub class_counts: Vec<usize>,
}

#[derive(Clone, Default)]
struct Tally {
    seen: Vec<usize>,
    wrong: Vec<usize>,
}

impl Tally {
    fn new(k: usize) -> Self {
        Tally { seen: vec![0; k], wrong: vec![0; k] }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for c in 0..self.seen.len() {
            self.seen[c] += other.seen[c];
            self.wrong[c] += other.wrong[c];
        }
        self
    }
}

fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// Splits `total` across classes in proportion to `priors`, handing the
/// rounding remainder to the lowest-index classes with positive prior.
fn stratify(total: usize, priors: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = priors.iter().map(|p| (p * total as f64).floor() as usize).collect();
    let mut left = total.saturating_sub(counts.iter().sum());
    let positive: Vec<usize> = (0..priors.len()).filter(|&c| priors[c] > 0.0).collect();
    let mut idx = 0;
    while left > 0 && !positive.is_empty() {
        counts[positive[idx % positive.len()]] += 1;
        left -= 1;
        idx += 1;
    }
    counts
}

/// Monte Carlo test error. Gaussian mixtures are sampled stratified by
/// class; the logit model draws labels from the posterior. Deterministic in
/// `(clf, model, n_test, seed)` regardless of thread count.
pub fn mc_error(clf: &LinearClassifier, model: &GenerativeModel, n_test: usize, seed: u64) -> Result<ErrorEstimate> {
    if n_test == 0 {
        return Err(Error::InvalidInput("n_test must be at least 1".into()));
    }
    if clf.p() != model.p() {
        return Err(Error::DimMismatch(format!("classifier p = {}, model p = {}", clf.p(), model.p())));
    }
    let k = model.k();
    let root = Stream::from_seed(seed);
    match model {
        GenerativeModel::Gmm(spec) => {
            let counts = stratify(n_test, spec.priors());
            let jobs: Vec<(usize, usize, usize)> = (0..k)
                .flat_map(|c| {
                    let nc = counts[c];
                    (0..nc.div_ceil(BATCH)).map(move |b| (c, b, BATCH.min(nc - b * BATCH)))
                })
                .collect();
            let tally = jobs
                .par_iter()
                .map(|&(c, b, size)| {
                    let mut stream = root.derive(&[c as u64, b as u64]);
                    let mut x = Matrix::zeros(spec.p(), size);
                    for i in 0..size {
                        spec.draw_conditional(c, &mut stream, x.col_mut(i));
                    }
                    let preds = clf.predict_batch(&x).expect("dimensions checked");
                    let mut t = Tally::new(k);
                    t.seen[c] = size;
                    t.wrong[c] = preds.iter().filter(|&&y| y != c).count();
                    t
                })
                .reduce(|| Tally::new(k), Tally::merge);
            let per_class: Vec<f64> = (0..k)
                .map(|c| if tally.seen[c] == 0 { 0.0 } else { tally.wrong[c] as f64 / tally.seen[c] as f64 })
                .collect();
            let se_per_class: Vec<f64> = (0..k).map(|c| binomial_se(per_class[c], tally.seen[c])).collect();
            let total: f64 = (0..k).map(|c| spec.priors()[c] * per_class[c]).sum();
            let se_total = (0..k)
                .map(|c| (spec.priors()[c] * se_per_class[c]).powi(2))
                .sum::<f64>()
                .sqrt();
            Ok(ErrorEstimate { total, per_class, n_test, se_total, se_per_class, class_counts: tally.seen })
        }
        GenerativeModel::Mlm(spec) => {
            let (outcomes, labels) = mlm_outcomes(&[clf], spec, n_test, &root);
            let mut t = Tally::new(k);
            for (i, &y) in labels.iter().enumerate() {
                t.seen[y] += 1;
                t.wrong[y] += usize::from(outcomes[0][i]);
            }
            let wrong: usize = t.wrong.iter().sum();
            let total = wrong as f64 / n_test as f64;
            let per_class: Vec<f64> = (0..k)
                .map(|c| if t.seen[c] == 0 { 0.0 } else { t.wrong[c] as f64 / t.seen[c] as f64 })
                .collect();
            let se_per_class = (0..k).map(|c| binomial_se(per_class[c], t.seen[c])).collect();
            Ok(ErrorEstimate {
                total,
                per_class,
                n_test,
                se_total: binomial_se(total, n_test),
                se_per_class,
                class_counts: t.seen,
            })
        }
    }
}

/// Draws `n_test` logit-model points and records, per classifier, whether
/// each point is misclassified. Returns the outcomes and the true labels.
fn mlm_outcomes(clfs: &[&LinearClassifier], spec: &MlmSpec, n_test: usize, root: &Stream) -> (Vec<Vec<bool>>, Vec<usize>) {
    let batches: Vec<(Vec<Vec<bool>>, Vec<usize>)> = (0..n_test.div_ceil(BATCH))
        .into_par_iter()
        .map(|b| {
            let size = BATCH.min(n_test - b * BATCH);
            let mut stream = root.derive(&[b as u64]);
            let mut x = Matrix::zeros(spec.p(), size);
            let labels: Vec<usize> = (0..size).map(|i| spec.draw(&mut stream, x.col_mut(i))).collect();
            let wrong = clfs
                .iter()
                .map(|clf| {
                    let preds = clf.predict_batch(&x).expect("dimensions checked");
                    preds.iter().zip(&labels).map(|(p, y)| p != y).collect()
                })
                .collect();
            (wrong, labels)
        })
        .collect();
    let mut outcomes = vec![Vec::with_capacity(n_test); clfs.len()];
    let mut labels = Vec::with_capacity(n_test);
    for (wrong, ys) in batches {
        for (acc, w) in outcomes.iter_mut().zip(wrong) {
            acc.extend(w);
        }
        labels.extend(ys);
    }
    (outcomes, labels)
}

/// Variance-free upper estimate of the class-wise mixture error:
/// `P_{e|c} ≤ Σ_{j≠c} Q((ŵ_c − ŵ_j)ᵀμ_c / ‖ŵ_c − ŵ_j‖)`, clipped to 1.
pub fn gmm_pairwise_q_bound(clf: &LinearClassifier, spec: &GmmSpec) -> Result<Vec<f64>> {
    if clf.kind() == ClassifierKind::Ovo || clf.k() != spec.k() || clf.p() != spec.p() {
        return Err(Error::InvalidInput("needs a one-row-per-class classifier matching the model".into()));
    }
    let w = clf.weights();
    let k = spec.k();
    Ok((0..k)
        .map(|c| {
            let mut bound = 0.0;
            for j in (0..k).filter(|&j| j != c) {
                let diff: Vec<f64> = (0..spec.p()).map(|r| w[(c, r)] - w[(j, r)]).collect();
                let nd = dot(&diff, &diff).sqrt();
                bound += if nd == 0.0 { 0.5 } else { q_function(dot(&diff, spec.mean(c)) / nd) };
            }
            bound.min(1.0)
        })
        .collect())
}

/// Mixture error rate function with uncalibrated constants `C₁..C₄`:
/// `(k−1)·exp(−‖μ‖²·((1 − C₁/√n − C₂n/p)‖μ‖ − C₃·min(√k, √ln 2n))² / (C₄(1 + kp/(n‖μ‖²))))`,
/// or 1 when the inner term is not positive.
pub fn gmm_bound_rate(n: usize, p: usize, k: usize, mu_norm: f64, c: [f64; 4]) -> f64 {
    let (nf, pf, kf) = (n as f64, p as f64, k as f64);
    let inner = (1.0 - c[0] / nf.sqrt() - c[1] * nf / pf) * mu_norm - c[2] * kf.sqrt().min((2.0 * nf).ln().sqrt());
    if !(inner > 0.0) {
        return 1.0;
    }
    let mu2 = mu_norm * mu_norm;
    let exponent = -mu2 * inner * inner / (c[3] * (1.0 + kf * pf / (nf * mu2)));
    ((kf - 1.0) * exponent.exp()).clamp(0.0, 1.0)
}

/// Survival and contamination of a recovered direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SuCn {
    pub su: f64,
    pub cn: f64,
}

impl SuCn {
    /// `P(xᵀΔ · xᵀΔ̂ < 0)` for Gaussian `x`: `½ − atan(su/cn)/π`.
    pub fn sign_disagreement(&self) -> f64 {
        0.5 - self.su.atan2(self.cn) / std::f64::consts::PI
    }
}

/// `su = Δ̂ᵀΣΔ/‖Σ^{1/2}Δ‖`, `cn = √(‖Σ^{1/2}Δ̂‖² − su²)` with `Σ = diag(λ)`.
pub fn su_cn(delta_hat: &[f64], delta: &[f64], spectrum: &[f64]) -> Result<SuCn> {
    if delta_hat.len() != delta.len() || delta.len() != spectrum.len() {
        return Err(Error::DimMismatch("su_cn vectors must share length".into()));
    }
    let signal: f64 = delta.iter().zip(spectrum).map(|(d, l)| l * d * d).sum();
    if signal <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    let cross: f64 = delta_hat.iter().zip(delta).zip(spectrum).map(|((a, b), l)| l * a * b).sum();
    let energy: f64 = delta_hat.iter().zip(spectrum).map(|(a, l)| l * a * a).sum();
    let su = cross / signal.sqrt();
    Ok(SuCn { su, cn: (energy - su * su).max(0.0).sqrt() })
}

/// Monte Carlo `P(xᵀΔ · xᵀΔ̂ < 0)` over `x ~ N(0, diag λ)`, with its binomial SE.
pub fn mc_sign_disagreement(delta_hat: &[f64], delta: &[f64], spectrum: &[f64], samples: usize, seed: u64) -> (f64, f64) {
    let root = Stream::from_seed(seed);
    let sd: Vec<f64> = spectrum.iter().map(|l| l.sqrt()).collect();
    let hits: usize = (0..samples.div_ceil(BATCH))
        .into_par_iter()
        .map(|b| {
            let size = BATCH.min(samples - b * BATCH);
            let mut stream = root.derive(&[b as u64]);
            let mut count = 0;
            for _ in 0..size {
                let (mut u, mut v) = (0.0, 0.0);
                for j in 0..sd.len() {
                    let x = stream.normal() * sd[j];
                    u += x * delta[j];
                    v += x * delta_hat[j];
                }
                count += usize::from(u * v < 0.0);
            }
            count
        })
        .sum();
    let p = hits as f64 / samples as f64;
    (p, binomial_se(p, samples))
}

#[derive(Clone, Debug, Serialize)]
pub struct ExcessRisk {
    /// `err(W) − err(Bayes)` on shared test points; may be negative.
    pub excess: f64,
    /// Standard error of the paired difference.
    pub se: f64,
    pub error: f64,
    pub bayes: f64,
    /// `Σ_{c₁<c₂} (½ − atan(su/cn)/π)` over class-pair difference directions.
    pub pairwise_bound: f64,
}

/// Excess risk over the Bayes classifier `ŵ_c = μ_c`, estimated on one
/// shared test stream, alongside the pairwise arctan bound.
pub fn mlm_excess_risk(clf: &LinearClassifier, spec: &MlmSpec, n_test: usize, seed: u64) -> Result<ExcessRisk> {
    if clf.kind() == ClassifierKind::Ovo || clf.k() != spec.k() || clf.p() != spec.p() {
        return Err(Error::InvalidInput("needs a one-row-per-class classifier matching the model".into()));
    }
    if n_test == 0 {
        return Err(Error::InvalidInput("n_test must be at least 1".into()));
    }
    let bayes = LinearClassifier::new(spec.means().transpose(), ClassifierKind::Reference)?;
    let (outcomes, _) = mlm_outcomes(&[clf, &bayes], spec, n_test, &Stream::from_seed(seed));
    let nf = n_test as f64;
    let diffs: Vec<f64> = outcomes[0]
        .iter()
        .zip(&outcomes[1])
        .map(|(&a, &b)| f64::from(u8::from(a)) - f64::from(u8::from(b)))
        .collect();
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
    let err_w = outcomes[0].iter().filter(|&&w| w).count() as f64 / nf;
    let err_b = outcomes[1].iter().filter(|&&w| w).count() as f64 / nf;

    let bound = mlm_pairwise_bound(clf, spec)?;
    Ok(ExcessRisk { excess: mean, se: (var / nf).sqrt(), error: err_w, bayes: err_b, pairwise_bound: bound })
}

/// `Σ_{c₁<c₂} (½ − atan(su/cn)/π)` for a logit-model classifier.
pub fn mlm_pairwise_bound(clf: &LinearClassifier, spec: &MlmSpec) -> Result<f64> {
    if clf.kind() == ClassifierKind::Ovo || clf.k() != spec.k() || clf.p() != spec.p() {
        return Err(Error::InvalidInput("needs a one-row-per-class classifier matching the model".into()));
    }
    let w = clf.weights();
    let m = spec.means();
    let k = spec.k();
    let mut bound = 0.0;
    for c1 in 0..k {
        for c2 in c1 + 1..k {
            let dh: Vec<f64> = (0..spec.p()).map(|r| w[(c1, r)] - w[(c2, r)]).collect();
            let d: Vec<f64> = (0..spec.p()).map(|r| m[(r, c1)] - m[(r, c2)]).collect();
            bound += su_cn(&dh, &d, spec.spectrum())?.sign_disagreement();
        }
    }
    Ok(bound)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateExponents {
    /// Exponent of `n` in the survival lower bound.
    pub su_exponent: f64,
    /// Exponent of `n` in the contamination upper bound (up to `√log n`).
    pub cn_exponent: f64,
    /// `su_exponent − cn_exponent`.
    pub snr_exponent: f64,
    /// `q < (1 − r) + (m − 1)/2`.
    pub consistent: bool,
}

/// Closed-form `n`-exponents of survival, contamination and their ratio for
/// the bi-level ensemble.
pub fn bilevel_rate_exponents(params: &BilevelParams) -> Result<RateExponents> {
    let BilevelParams { m, q, r, .. } = *params;
    if !(m > 1.0) || !(0.0..1.0).contains(&r) || !(q > 0.0 && q < m - r) {
        return Err(Error::InvalidRegime(format!("(m, q, r) = ({m}, {q}, {r})")));
    }
    let (su, cn) = if q <= 1.0 - r {
        (0.0, -(m - 1.0).min(1.0 - r) / 2.0)
    } else {
        ((1.0 - r) - q, -(m - 1.0).min(2.0 * q + r - 1.0) / 2.0)
    };
    Ok(RateExponents {
        su_exponent: su,
        cn_exponent: cn,
        snr_exponent: su - cn,
        consistent: q < (1.0 - r) + (m - 1.0) / 2.0,
    })
}

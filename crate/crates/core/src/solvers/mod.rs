//! Linear multiclass classifiers: minimum-norm interpolation, the
//! multiclass SVM, one-vs-all (plain and simplex-margin) and one-vs-one
//! ensembles.

mod mni;
pub mod qp;
mod svm;

use std::io::Write;

use serde::Serialize;

use crate::datagen::Labels;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

pub use mni::{fit_mni, fit_mni_targets, fit_mni_with, simplex_targets, SimplexTargets};
pub use svm::{
    fit_binary_svm, fit_multiclass_svm, fit_ova_svm, fit_ovo_svm, fit_simplex_ova_svm,
    multiclass_dual, BinaryFit, DualVariables, SvmFit,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Mni,
    MulticlassSvm,
    SimplexOva,
    Ova,
    Ovo,
    /// Hand-specified weights, e.g. the Bayes classifier.
    Reference,
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ClassifierKind::Mni => "mni",
            ClassifierKind::MulticlassSvm => "multiclass_svm",
            ClassifierKind::SimplexOva => "simplex_ova",
            ClassifierKind::Ova => "ova",
            ClassifierKind::Ovo => "ovo",
            ClassifierKind::Reference => "reference",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub duality_gap: f64,
    pub kkt_residual: f64,
    /// Set when the Gram matrix was singular and a pseudo-inverse was used.
    pub rank_deficient: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// KKT residual at which the dual solve stops.
    pub tol: f64,
    /// Gradient iteration cap; `None` means `50·n·k`.
    pub max_iters: Option<usize>,
    /// Absolute margin tolerance for calling a constraint active.
    pub active_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_iters: None, active_tol: 1e-6 }
    }
}

impl SolverOptions {
    pub(crate) fn qp(&self, n: usize, k: usize) -> qp::QpOptions {
        qp::QpOptions {
            tol: self.tol,
            max_iters: self.max_iters.unwrap_or(50 * n.max(1) * k.max(1)),
            active_tol: self.active_tol,
            polish_every: 50,
        }
    }
}

/// Weight rows plus how to turn scores into a label.
///
/// For one-vs-one ensembles each row is a pairwise classifier for
/// `pairs[r] = (a, b)` with `a < b`, positive scores voting for `a`.
/// Otherwise row `c` scores class `c`.
#[derive(Clone, Debug)]
pub struct LinearClassifier {
    weights: Matrix,
    kind: ClassifierKind,
    k: usize,
    pairs: Vec<(usize, usize)>,
    pub diagnostics: SolverDiagnostics,
}

impl LinearClassifier {
    pub fn new(weights: Matrix, kind: ClassifierKind) -> Result<Self> {
        if !weights.is_finite() {
            return Err(Error::NonFinite);
        }
        if kind == ClassifierKind::Ovo {
            return Err(Error::InvalidInput("use LinearClassifier::ovo for pairwise ensembles".into()));
        }
        let k = weights.rows();
        Ok(LinearClassifier { weights, kind, k, pairs: Vec::new(), diagnostics: SolverDiagnostics::default() })
    }

    pub fn ovo(weights: Matrix, k: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if weights.rows() != pairs.len() {
            return Err(Error::DimMismatch(format!("{} rows for {} pairs", weights.rows(), pairs.len())));
        }
        if pairs.iter().any(|&(a, b)| a >= b || b >= k) {
            return Err(Error::InvalidInput("pairs must satisfy a < b < k".into()));
        }
        if !weights.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(LinearClassifier { weights, kind: ClassifierKind::Ovo, k, pairs, diagnostics: SolverDiagnostics::default() })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.weights.cols()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Row scores `Wx`.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.weights.rows())
            .map(|r| {
                let mut s = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    s += self.weights[(r, j)] * xj;
                }
                s
            })
            .collect()
    }

    /// Predicted label; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.p() {
            return Err(Error::DimMismatch(format!("classifier has p = {}, point has {}", self.p(), x.len())));
        }
        Ok(self.predict_unchecked(&self.scores(x)))
    }

    /// Label from precomputed row scores.
    pub fn predict_unchecked(&self, scores: &[f64]) -> usize {
        if self.kind == ClassifierKind::Ovo {
            let mut votes = vec![0usize; self.k];
            for (&(a, b), &s) in self.pairs.iter().zip(scores) {
                votes[if s >= 0.0 { a } else { b }] += 1;
            }
            argmax_first(votes.iter().map(|&v| v as f64))
        } else {
            argmax_first(scores.iter().copied())
        }
    }

    /// Predictions for every column of `x` (`p × m`).
    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<usize>> {
        if x.rows() != self.p() {
            return Err(Error::DimMismatch(format!("classifier has p = {}, points have {}", self.p(), x.rows())));
        }
        let wx = self.weights.matmul(x)?;
        Ok((0..x.cols()).map(|i| self.predict_unchecked(wx.col(i))).collect())
    }

    /// Training-set margins `w_rᵀ x_i`, as a `rows × n` matrix.
    pub fn inner_products(&self, x: &Matrix) -> Result<Matrix> {
        self.weights.matmul(x)
    }

    /// Weight matrix as CSV, one row per classifier row.
    pub fn write_weights_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for r in 0..self.weights.rows() {
            wtr.write_record(self.weights.row(r).iter().map(|v| format!("{v:.16e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn sidecar(&self, tol: f64, seed: Option<u64>) -> ClassifierSidecar {
        ClassifierSidecar {
            kind: self.kind,
            tol,
            iterations: self.diagnostics.iterations,
            duality_gap: self.diagnostics.duality_gap,
            kkt_residual: self.diagnostics.kkt_residual,
            seed,
            pairs: (self.kind == ClassifierKind::Ovo).then(|| self.pairs.clone()),
        }
    }
}

/// JSON metadata written next to an exported weight matrix.
#[derive(Clone, Debug, Serialize)]
pub struct ClassifierSidecar {
    pub kind: ClassifierKind,
    pub tol: f64,
    pub iterations: usize,
    pub duality_gap: f64,
    pub kkt_residual: f64,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(usize, usize)>>,
}

pub(crate) fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

pub(crate) fn check_xy(x: &Matrix, labels: &Labels) -> Result<()> {
    if x.cols() != labels.n() {
        return Err(Error::DimMismatch(format!("X has {} columns but {} labels", x.cols(), labels.n())));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// `‖W‖_F²`
pub fn squared_norm(w: &Matrix) -> f64 {
    dot(w.as_slice(), w.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_basic_and_ties() {
        let c = LinearClassifier::new(Matrix::identity(3), ClassifierKind::Reference).unwrap();
        assert_eq!(c.predict(&[0.0, 1.0, 0.0]).unwrap(), 1);
        assert_eq!(c.predict(&[0.0, 0.0, 0.0]).unwrap(), 0);
        assert!(c.predict(&[1.0]).is_err());
    }

    #[test]
    fn ovo_majority_vote() {
        // Pairs (0,1), (0,2), (1,2): class 1 wins (0,1) and (1,2).
        let w = Matrix::from_rows(&[&[-1.0], &[1.0], &[1.0]]).unwrap();
        let c = LinearClassifier::ovo(w, 3, vec![(0, 1), (0, 2), (1, 2)]).unwrap();
        assert_eq!(c.predict(&[1.0]).unwrap(), 1);
        // Cyclic votes tie one each: lowest index wins.
        let w = Matrix::from_rows(&[&[1.0], &[-1.0], &[1.0]]).unwrap();
        let c = LinearClassifier::ovo(w, 3, vec![(0, 1), (0, 2), (1, 2)]).unwrap();
        assert_eq!(c.predict(&[1.0]).unwrap(), 0);
    }
}

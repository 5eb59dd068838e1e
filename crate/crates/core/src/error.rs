use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("dimension too small: p = {p} < k = {k}")]
    DimTooSmall { p: usize, k: usize },
    #[error("invalid parameter regime: {0}")]
    InvalidRegime(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("training data not separable{}", class_suffix(.class))]
    NotSeparable { class: Option<usize> },
    #[error("solver did not converge after {iterations} iterations (kkt residual {kkt_residual:e}, gap {duality_gap:e})")]
    Unconverged {
        iterations: usize,
        kkt_residual: f64,
        duality_gap: f64,
        /// Best iterate reached, when the failing fit was a multiclass SVM.
        best: Option<Box<crate::solvers::SvmFit>>,
    },
    #[error("class pair ({0}, {1}) has no samples for one of its classes")]
    EmptyPair(usize, usize),
    #[error("leave-one-out Gram matrix is rank deficient (rank {rank} < {n})")]
    RankDeficient { rank: usize, n: usize },
    #[error("signal direction has zero energy under the covariance")]
    ZeroSignal,
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn class_suffix(class: &Option<usize>) -> String {
    match class {
        Some(c) => format!(" (class {c})"),
        None => String::new(),
    }
}

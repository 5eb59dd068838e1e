use crate::datagen::Labels;
use crate::error::{Error, Result};
use crate::linalg::{gram, pinv_default, Matrix, PseudoInverse};

use super::{check_xy, ClassifierKind, LinearClassifier, SolverDiagnostics};

/// Simplex-encoded targets `z_c = v_c − 1/k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexTargets {
    z: Matrix,
}

impl SimplexTargets {
    /// `k × n` target matrix.
    pub fn matrix(&self) -> &Matrix {
        &self.z
    }

    pub fn row(&self, c: usize) -> Vec<f64> {
        self.z.row(c)
    }

    pub fn into_matrix(self) -> Matrix {
        self.z
    }
}

pub fn simplex_targets(labels: &Labels) -> SimplexTargets {
    let k = labels.k();
    let hi = (k - 1) as f64 / k as f64;
    let lo = -1.0 / k as f64;
    let z = Matrix::from_fn(k, labels.n(), |c, i| if labels.get(i) == c { hi } else { lo });
    SimplexTargets { z }
}

/// Minimum-norm interpolator of the one-hot targets.
pub fn fit_mni(x: &Matrix, labels: &Labels) -> Result<LinearClassifier> {
    check_xy(x, labels)?;
    fit_mni_targets(x, &labels.one_hot())
}

/// Minimum-norm interpolator of arbitrary target rows `T` (`k × n`):
/// `w_c = X (XᵀX)⁺ t_c`.
pub fn fit_mni_targets(x: &Matrix, targets: &Matrix) -> Result<LinearClassifier> {
    if targets.cols() != x.cols() {
        return Err(Error::DimMismatch(format!(
            "targets have {} columns, X has {}",
            targets.cols(),
            x.cols()
        )));
    }
    let a_pinv = pinv_default(&gram(x))?;
    fit_mni_with(x, &a_pinv, targets)
}

/// As [`fit_mni_targets`] with a precomputed `(XᵀX)⁺`.
pub fn fit_mni_with(x: &Matrix, a_pinv: &PseudoInverse, targets: &Matrix) -> Result<LinearClassifier> {
    let (n, k) = (x.cols(), targets.rows());
    if targets.cols() != n || a_pinv.dim() != n {
        return Err(Error::DimMismatch(format!(
            "X has {n} columns, targets {} and pseudo-inverse {}",
            targets.cols(),
            a_pinv.dim()
        )));
    }
    let mut coeffs = Matrix::zeros(n, k);
    for c in 0..k {
        let beta = a_pinv.apply(&targets.row(c))?;
        coeffs.col_mut(c).copy_from_slice(&beta);
    }
    let weights = x.matmul(&coeffs)?.transpose();
    let fitted = weights.matmul(x)?;
    let residual = fitted.sub(targets)?.max_abs();
    let mut clf = LinearClassifier::new(weights, ClassifierKind::Mni)?;
    clf.diagnostics = SolverDiagnostics {
        iterations: 0,
        duality_gap: 0.0,
        kkt_residual: residual,
        rank_deficient: !a_pinv.is_full_rank(),
    };
    Ok(clf)
}

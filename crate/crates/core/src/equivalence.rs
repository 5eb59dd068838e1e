//! When does the multiclass SVM interpolate the simplex targets?
//!
//! The deterministic sign condition `z_c ⊙ (XᵀX)⁺z_c > 0` for every class
//! guarantees that the unconstrained dual maximizer is feasible, so every
//! margin constraint is active and the SVM coincides with the minimum-norm
//! interpolator of the simplex targets.

use serde::Serialize;

use crate::datagen::{GenerativeModel, Labels};
use crate::error::Result;
use crate::linalg::{gram, pinv_default, Matrix, PseudoInverse};
use crate::solvers::{fit_mni_with, fit_multiclass_svm, simplex_targets, SolverOptions, SvmFit};

/// Values in `(−MARGINAL_BAND, MARGINAL_BAND)` are too close to zero to trust.
pub const MARGINAL_BAND: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct DetConReport {
    /// `q_{c,i} = z_{c,i}·((XᵀX)⁺z_c)_i`, `k × n`.
    pub values: Matrix,
    pub verdict: bool,
    pub min_value: f64,
    pub argmin: (usize, usize),
    /// Number of entries inside the marginal band.
    pub marginal: usize,
    pub strict_tol: f64,
}

impl DetConReport {
    /// One `(class, sample, value)` triple per entry, sample-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let k = self.values.rows();
        (0..self.values.cols()).flat_map(move |i| (0..k).map(move |c| (c, i, self.values[(c, i)])))
    }
}

/// Sign condition with the default exact-sign threshold.
pub fn check_det_condition(x: &Matrix, labels: &Labels) -> Result<DetConReport> {
    let a_pinv = pinv_default(&gram(x))?;
    Ok(det_condition_with(&a_pinv, labels, 0.0))
}

/// Sign condition given `(XᵀX)⁺`; the verdict requires every value to exceed
/// `strict_tol` and to lie outside the marginal band.
pub fn det_condition_with(a_pinv: &PseudoInverse, labels: &Labels, strict_tol: f64) -> DetConReport {
    let (k, n) = (labels.k(), labels.n());
    let z = simplex_targets(labels);
    let mut values = Matrix::zeros(k, n);
    let mut min_value = f64::INFINITY;
    let mut argmin = (0, 0);
    let mut marginal = 0;
    for c in 0..k {
        let zc = z.row(c);
        let bc = a_pinv.apply(&zc).expect("dimensions agree");
        for i in 0..n {
            let q = zc[i] * bc[i];
            values[(c, i)] = q;
            if q.abs() < MARGINAL_BAND {
                marginal += 1;
            }
            if q < min_value {
                min_value = q;
                argmin = (c, i);
            }
        }
    }
    let verdict = n > 0 && min_value > strict_tol && marginal == 0;
    DetConReport { values, verdict, min_value, argmin, marginal, strict_tol }
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolationReport {
    pub flags: Vec<bool>,
    pub fraction: f64,
    pub max_residual: f64,
}

/// Which training samples satisfy `|w_cᵀx_i − z_{c,i}| ≤ tol` for all `c`.
pub fn interpolation_fraction(w: &Matrix, x: &Matrix, labels: &Labels, tol: f64) -> Result<InterpolationReport> {
    let fitted = w.matmul(x)?;
    let z = simplex_targets(labels);
    let resid = fitted.sub(z.matrix())?;
    let n = labels.n();
    let mut flags = Vec::with_capacity(n);
    let mut max_residual = 0.0f64;
    for i in 0..n {
        let worst = resid.col(i).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        max_residual = max_residual.max(worst);
        flags.push(worst <= tol);
    }
    let hits = flags.iter().filter(|&&f| f).count();
    let fraction = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    Ok(InterpolationReport { flags, fraction, max_residual })
}

/// Optional held-out check for [`certify_equivalence`].
#[derive(Clone, Copy, Debug)]
pub struct TestStream<'a> {
    pub model: &'a GenerativeModel,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub det_con: bool,
    pub svm_equals_mni: bool,
    pub decision_agreement: bool,
    pub max_weight_gap: f64,
    /// Points on which decisions were compared.
    pub n_compared: usize,
    pub svm: SvmFit,
}

/// Fits the multiclass SVM and the simplex-target interpolator and compares
/// weights (relative Frobenius gap) and decisions. Decisions are compared on
/// `test` when given, on the training points otherwise.
pub fn certify_equivalence(
    x: &Matrix,
    labels: &Labels,
    tol: f64,
    opts: &SolverOptions,
    test: Option<TestStream<'_>>,
) -> Result<EquivalenceReport> {
    let a_pinv = pinv_default(&gram(x))?;
    let det = det_condition_with(&a_pinv, labels, 0.0);
    let svm = fit_multiclass_svm(x, labels, opts)?;
    let mni = fit_mni_with(x, &a_pinv, simplex_targets(labels).matrix())?;
    let w_svm = svm.classifier.weights();
    let gap = w_svm.sub(mni.weights())?.frobenius_norm();
    let svm_equals_mni = gap <= tol * (1.0 + w_svm.frobenius_norm());

    let points = match test {
        Some(t) => t.model.sample(t.n_test, t.seed)?.x,
        None => x.clone(),
    };
    let a = svm.classifier.predict_batch(&points)?;
    let b = mni.predict_batch(&points)?;
    Ok(EquivalenceReport {
        det_con: det.verdict,
        svm_equals_mni,
        decision_agreement: a == b,
        max_weight_gap: gap,
        n_compared: points.cols(),
        svm,
    })
}

/// `(d₂, d_∞) = (‖λ‖₁²/‖λ‖₂², ‖λ‖₁/‖λ‖_∞)`.
pub fn effective_dims(spectrum: &[f64]) -> (f64, f64) {
    let l1: f64 = spectrum.iter().map(|v| v.abs()).sum();
    let l2sq: f64 = spectrum.iter().map(|v| v * v).sum();
    let linf = spectrum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (l1 * l1 / l2sq, l1 / linf)
}

/// Sufficient overparameterization for the Gaussian mixture:
/// `p > C₁k³n·ln(kn) + n − 1` and `p > C₂k^{1.5}n^{1.5}‖μ‖`.
pub fn sufficient_condition_gmm(n: usize, p: usize, k: usize, mu_norm: f64, c1: f64, c2: f64) -> bool {
    let (n, p, k) = (n as f64, p as f64, k as f64);
    p > c1 * k.powi(3) * n * (k * n).ln() + n - 1.0 && p > c2 * k.powf(1.5) * n.powf(1.5) * mu_norm
}

/// Sufficient spectrum spread for the multinomial logit model:
/// `d_∞ > C₁k²n·ln(kn)` and `d₂ > C₂(ln(kn) + n)`.
pub fn sufficient_condition_mlm(n: usize, k: usize, spectrum: &[f64], c1: f64, c2: f64) -> bool {
    let (d2, dinf) = effective_dims(spectrum);
    let (n, k) = (n as f64, k as f64);
    let log = (k * n).ln();
    dinf > c1 * k * k * n * log && d2 > c2 * (log + n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_points_fail() {
        let x = Matrix::from_col_major(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let labels = Labels::new(vec![0, 1], 2).unwrap();
        let report = check_det_condition(&x, &labels).unwrap();
        assert!(!report.verdict);
    }

    #[test]
    fn zero_weights_interpolate_nothing() {
        let x = Matrix::identity(3);
        let labels = Labels::new(vec![0, 1, 2], 3).unwrap();
        let r = interpolation_fraction(&Matrix::zeros(3, 3), &x, &labels, 1e-6).unwrap();
        assert_eq!(r.fraction, 0.0);
    }

    #[test]
    fn predicates() {
        assert!(sufficient_condition_gmm(10, 1_000_000, 2, 1.0, 1.0, 1.0));
        assert!(!sufficient_condition_gmm(10, 100, 2, 1.0, 1.0, 1.0));
        let iso = vec![1.0; 500];
        let (d2, dinf) = effective_dims(&iso);
        assert!((d2 - 500.0).abs() < 1e-9 && (dinf - 500.0).abs() < 1e-9);
        let mut spike = vec![1e-6; 500];
        spike[0] = 500.0;
        let (_, dinf) = effective_dims(&spike);
        assert!(dinf < 1.01);
        assert!(!sufficient_condition_mlm(10, 2, &spike, 1.0, 1.0));
    }
}

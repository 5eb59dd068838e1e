use crate::datagen::Labels;
use crate::error::{Error, Result};
use crate::linalg::{gram, pinv_default, Matrix, PseudoInverse};

use super::qp::{NonnegQp, QpFailure, QpSolution};
use super::{check_xy, simplex_targets, squared_norm, ClassifierKind, LinearClassifier, SolverDiagnostics, SolverOptions};

/// Dual coefficients `β` (`k × n`) with `w_c = Xβ_c`.
///
/// For `c ≠ y_i`, `β_{c,i} = −λ_{c,i} ≤ 0` where `λ_{c,i}` is the multiplier
/// of the margin constraint `(w_{y_i} − w_c)ᵀx_i ≥ 1`, and
/// `β_{y_i,i} = Σ_c λ_{c,i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVariables {
    beta: Matrix,
}

impl DualVariables {
    pub fn beta(&self) -> &Matrix {
        &self.beta
    }

    /// Multiplier of the `(c, i)` constraint; zero when `c = y_i`.
    pub fn lambda(&self, labels: &Labels, c: usize, i: usize) -> f64 {
        if labels.get(i) == c {
            0.0
        } else {
            -self.beta[(c, i)]
        }
    }
}

/// A solved multiclass SVM.
#[derive(Clone, Debug)]
pub struct SvmFit {
    pub classifier: LinearClassifier,
    pub duals: DualVariables,
    /// `½‖W‖_F²`
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Largest `|1 − margin|` over constraints with multiplier above the active tolerance.
    pub complementarity: f64,
    /// Smallest training margin `(w_{y_i} − w_c)ᵀx_i`.
    pub min_margin: f64,
}

/// The multiclass dual as a non-negative QP in `λ`, with one variable per
/// `(c, i)`, `c ≠ y_i`, in the order returned alongside.
pub fn multiclass_dual(a: &Matrix, labels: &Labels) -> (NonnegQp, Vec<(usize, usize)>) {
    let (n, k) = (labels.n(), labels.k());
    let vars: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..k).filter(move |&c| c != labels.get(i)).map(move |c| (c, i)))
        .collect();
    let d = |u: usize, v: usize| f64::from(u8::from(u == v));
    let h = Matrix::from_fn(vars.len(), vars.len(), |r, s| {
        let (c, i) = vars[r];
        let (cp, j) = vars[s];
        let (yi, yj) = (labels.get(i), labels.get(j));
        a[(i, j)] * (d(yi, yj) - d(yi, cp) - d(c, yj) + d(c, cp))
    });
    (NonnegQp { h, b: vec![1.0; vars.len()] }, vars)
}

/// Hard-margin multiclass SVM `min ½‖W‖_F²` subject to
/// `(w_{y_i} − w_c)ᵀx_i ≥ 1` for all `i` and `c ≠ y_i`.
///
/// The warm start `β̂_c = (XᵀX)⁺z_c` is returned unchanged (zero iterations)
/// when it already satisfies the optimality conditions.
pub fn fit_multiclass_svm(x: &Matrix, labels: &Labels, opts: &SolverOptions) -> Result<SvmFit> {
    check_xy(x, labels)?;
    let a = gram(x);
    let a_pinv = pinv_default(&a)?;
    let (n, k) = (labels.n(), labels.k());
    let (qp, vars) = multiclass_dual(&a, labels);

    let z = simplex_targets(labels);
    let mut beta_hat = Matrix::zeros(k, n);
    for c in 0..k {
        beta_hat.set_row(c, &a_pinv.apply(&z.row(c))?);
    }
    let warm: Vec<f64> = vars.iter().map(|&(c, i)| (-beta_hat[(c, i)]).max(0.0)).collect();

    let build = |sol: &QpSolution| -> Result<SvmFit> {
        let mut beta = Matrix::zeros(k, n);
        for (&(c, i), &l) in vars.iter().zip(&sol.lambda) {
            beta[(c, i)] = -l;
            beta[(labels.get(i), i)] += l;
        }
        let weights = x.matmul(&beta.transpose())?.transpose();
        let margins = weights.matmul(x)?;
        let mut min_margin = f64::INFINITY;
        let mut comp = 0.0f64;
        for (&(c, i), &l) in vars.iter().zip(&sol.lambda) {
            let m = margins[(labels.get(i), i)] - margins[(c, i)];
            min_margin = min_margin.min(m);
            if l > opts.active_tol {
                comp = comp.max((m - 1.0).abs());
            }
        }
        let primal = 0.5 * squared_norm(&weights);
        let mut classifier = LinearClassifier::new(weights, ClassifierKind::MulticlassSvm)?;
        classifier.diagnostics = SolverDiagnostics {
            iterations: sol.iterations,
            duality_gap: sol.duality_gap,
            kkt_residual: sol.kkt_residual,
            rank_deficient: !a_pinv.is_full_rank(),
        };
        Ok(SvmFit {
            classifier,
            duals: DualVariables { beta },
            primal_objective: primal,
            dual_objective: sol.objective,
            complementarity: comp,
            min_margin: if vars.is_empty() { f64::INFINITY } else { min_margin },
        })
    };

    match qp.solve(&warm, &opts.qp(n, k)) {
        Ok(sol) => build(&sol),
        Err(QpFailure::Diverged) => Err(Error::NotSeparable { class: None }),
        Err(QpFailure::Stalled(sol)) => Err(Error::Unconverged {
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            duality_gap: sol.duality_gap,
            best: Some(Box::new(build(&sol)?)),
        }),
    }
}

/// A solved binary max-margin problem `min ½‖w‖²` s.t. `s_i wᵀx_i ≥ m_i`.
#[derive(Clone, Debug)]
pub struct BinaryFit {
    pub w: Vec<f64>,
    /// Constraint multipliers `ν ≥ 0`; `w = X (s ⊙ ν)`.
    pub nu: Vec<f64>,
    pub iterations: usize,
    pub duality_gap: f64,
    pub kkt_residual: f64,
}

/// Binary max-margin fit with per-sample signs `s_i = ±1` and margins `m_i`.
/// Pass `a_pinv` to reuse a pseudo-inverse of `XᵀX`.
pub fn fit_binary_svm(
    x: &Matrix,
    signs: &[f64],
    margins: &[f64],
    opts: &SolverOptions,
    a_pinv: Option<&PseudoInverse>,
) -> std::result::Result<BinaryFit, QpFailure> {
    let n = x.cols();
    assert_eq!(signs.len(), n);
    assert_eq!(margins.len(), n);
    let a = gram(x);
    let owned;
    let a_pinv = match a_pinv {
        Some(p) => p,
        None => {
            owned = pinv_default(&a).map_err(|_| QpFailure::Diverged)?;
            &owned
        }
    };
    let h = Matrix::from_fn(n, n, |i, j| signs[i] * signs[j] * a[(i, j)]);
    let qp = NonnegQp { h, b: margins.to_vec() };
    let sm: Vec<f64> = signs.iter().zip(margins).map(|(s, m)| s * m).collect();
    let nu_hat = a_pinv.apply(&sm).map_err(|_| QpFailure::Diverged)?;
    let warm: Vec<f64> = nu_hat.iter().zip(signs).map(|(v, s)| (v * s).max(0.0)).collect();
    let sol = qp.solve(&warm, &opts.qp(n, 2))?;
    let coeffs: Vec<f64> = sol.lambda.iter().zip(signs).map(|(v, s)| v * s).collect();
    let w = x.matvec(&coeffs).expect("n coefficients");
    Ok(BinaryFit {
        w,
        nu: sol.lambda,
        iterations: sol.iterations,
        duality_gap: sol.duality_gap,
        kkt_residual: sol.kkt_residual,
    })
}

fn binary_error(err: QpFailure, class: usize) -> Error {
    match err {
        QpFailure::Diverged => Error::NotSeparable { class: Some(class) },
        QpFailure::Stalled(sol) => Error::Unconverged {
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            duality_gap: sol.duality_gap,
            best: None,
        },
    }
}

fn merge(diag: &mut SolverDiagnostics, fit: &BinaryFit) {
    diag.iterations += fit.iterations;
    if fit.duality_gap.abs() > diag.duality_gap.abs() {
        diag.duality_gap = fit.duality_gap;
    }
    diag.kkt_residual = diag.kkt_residual.max(fit.kkt_residual);
}

/// One-vs-all max-margin classifiers: `w_cᵀx_i ≥ pos` when `y_i = c` and
/// `w_cᵀx_i ≤ neg` otherwise.
pub fn fit_ova_svm(x: &Matrix, labels: &Labels, margins: (f64, f64), opts: &SolverOptions) -> Result<LinearClassifier> {
    fit_ova_kind(x, labels, margins, opts, ClassifierKind::Ova)
}

/// One-vs-all with simplex margins `((k−1)/k, −1/k)`.
pub fn fit_simplex_ova_svm(x: &Matrix, labels: &Labels, opts: &SolverOptions) -> Result<LinearClassifier> {
    let k = labels.k() as f64;
    fit_ova_kind(x, labels, ((k - 1.0) / k, -1.0 / k), opts, ClassifierKind::SimplexOva)
}

fn fit_ova_kind(
    x: &Matrix,
    labels: &Labels,
    (pos, neg): (f64, f64),
    opts: &SolverOptions,
    kind: ClassifierKind,
) -> Result<LinearClassifier> {
    check_xy(x, labels)?;
    let (n, k) = (labels.n(), labels.k());
    let a_pinv = pinv_default(&gram(x))?;
    let mut weights = Matrix::zeros(k, x.rows());
    let mut diag = SolverDiagnostics { rank_deficient: !a_pinv.is_full_rank(), ..Default::default() };
    for c in 0..k {
        let signs: Vec<f64> = (0..n).map(|i| if labels.get(i) == c { 1.0 } else { -1.0 }).collect();
        let margins: Vec<f64> = (0..n).map(|i| if labels.get(i) == c { pos } else { -neg }).collect();
        let fit = fit_binary_svm(x, &signs, &margins, opts, Some(&a_pinv)).map_err(|e| binary_error(e, c))?;
        weights.set_row(c, &fit.w);
        merge(&mut diag, &fit);
    }
    let mut clf = LinearClassifier::new(weights, kind)?;
    clf.diagnostics = diag;
    Ok(clf)
}

/// One-vs-one ensemble: a `(1, −1)`-margin classifier per class pair `a < b`,
/// positive for `a`, combined by majority vote.
pub fn fit_ovo_svm(x: &Matrix, labels: &Labels, opts: &SolverOptions) -> Result<LinearClassifier> {
    check_xy(x, labels)?;
    let k = labels.k();
    let counts = labels.counts();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    let mut weights = Matrix::zeros(pairs.len(), x.rows());
    let mut diag = SolverDiagnostics::default();
    for (r, &(a, b)) in pairs.iter().enumerate() {
        if counts[a] == 0 || counts[b] == 0 {
            return Err(Error::EmptyPair(a, b));
        }
        let idx: Vec<usize> = (0..labels.n()).filter(|&i| labels.get(i) == a || labels.get(i) == b).collect();
        let xs = x.select_cols(&idx);
        let signs: Vec<f64> = idx.iter().map(|&i| if labels.get(i) == a { 1.0 } else { -1.0 }).collect();
        let fit = fit_binary_svm(&xs, &signs, &vec![1.0; idx.len()], opts, None).map_err(|e| binary_error(e, a))?;
        weights.set_row(r, &fit.w);
        merge(&mut diag, &fit);
    }
    let mut clf = LinearClassifier::ovo(weights, k, pairs)?;
    clf.diagnostics = diag;
    Ok(clf)
}

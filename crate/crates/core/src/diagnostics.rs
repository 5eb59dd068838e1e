//! Leave-one-out quadratic forms of the Gram matrix.
//!
//! Writing `X = X₋ⱼ + μ_j v_jᵀ`, the Gram matrix is a rank-two update of
//! `A₋ⱼ = X₋ⱼᵀX₋ⱼ` along `v_j` and `d_j = X₋ⱼᵀμ_j`. The forms below are
//! computed by direct inversion of `A₋ⱼ`.

use std::io::Write;

use serde::Serialize;

use crate::datagen::{sample_gmm, GmmSpec, Labels};
use crate::error::{Error, Result};
use crate::linalg::{dot, gram, norm, pinv_default, Matrix, PseudoInverse};

/// Class-level leave-one-out forms for class `j`, with per-sample vectors.
#[derive(Clone, Debug)]
pub struct LooClass {
    pub j: usize,
    /// `v_jᵀA₋ⱼ⁻¹v_j`
    pub s: f64,
    /// `d_jᵀA₋ⱼ⁻¹d_j`
    pub t: f64,
    /// `v_jᵀA₋ⱼ⁻¹d_j`
    pub h: f64,
    /// `s(‖μ_j‖² − t) + (1 + h)²`
    pub det: f64,
    pub mu_norm_sq: f64,
    /// `g_i = (A₋ⱼ⁻¹v_j)_i`
    pub g: Vec<f64>,
    /// `f_i = (A₋ⱼ⁻¹d_j)_i`
    pub f: Vec<f64>,
}

/// Leave-one-out forms for one `(j, i)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadFormSet {
    pub j: usize,
    pub i: usize,
    pub s: f64,
    pub t: f64,
    pub h: f64,
    pub g: f64,
    pub f: f64,
    pub det: f64,
    pub mu_norm_sq: f64,
}

impl QuadFormSet {
    /// `(v_jᵀA⁻¹)_i` for the full Gram matrix, recovered from the
    /// leave-one-out forms.
    pub fn full_g(&self) -> f64 {
        ((1.0 + self.h) * self.g - self.s * self.f) / self.det
    }
}

impl LooClass {
    pub fn at(&self, i: usize) -> QuadFormSet {
        QuadFormSet {
            j: self.j,
            i,
            s: self.s,
            t: self.t,
            h: self.h,
            g: self.g[i],
            f: self.f[i],
            det: self.det,
            mu_norm_sq: self.mu_norm_sq,
        }
    }
}

fn leave_out(x: &Matrix, labels: &Labels, means: &Matrix, j: usize) -> Result<(Matrix, Vec<f64>, Vec<f64>)> {
    if means.rows() != x.rows() || means.cols() != labels.k() || j >= labels.k() {
        return Err(Error::DimMismatch(format!(
            "means {}x{} for p = {}, k = {}, class {j}",
            means.rows(),
            means.cols(),
            x.rows(),
            labels.k()
        )));
    }
    let mu = means.col(j);
    let v = labels.indicator(j);
    let mut x_minus = x.clone();
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            for (a, m) in x_minus.col_mut(i).iter_mut().zip(mu) {
                *a -= m;
            }
        }
    }
    let d = x_minus.tr_matvec(mu)?;
    Ok((x_minus, v, d))
}

fn full_rank_pinv(a: &Matrix) -> Result<PseudoInverse> {
    let inv = pinv_default(a)?;
    if !inv.is_full_rank() {
        return Err(Error::RankDeficient { rank: inv.rank(), n: inv.dim() });
    }
    Ok(inv)
}

/// All leave-one-out forms for class `j`.
pub fn loo_class(x: &Matrix, labels: &Labels, means: &Matrix, j: usize) -> Result<LooClass> {
    let (x_minus, v, d) = leave_out(x, labels, means, j)?;
    let inv = full_rank_pinv(&gram(&x_minus))?;
    let av = inv.apply(&v)?;
    let ad = inv.apply(&d)?;
    let s = dot(&v, &av);
    let t = dot(&d, &ad);
    let h = dot(&v, &ad);
    let mu_norm_sq = norm(means.col(j)).powi(2);
    Ok(LooClass {
        j,
        s,
        t,
        h,
        det: s * (mu_norm_sq - t) + (1.0 + h) * (1.0 + h),
        mu_norm_sq,
        g: av,
        f: ad,
    })
}

/// Leave-one-out forms for class `j` and sample `i`.
pub fn loo_quadforms(x: &Matrix, labels: &Labels, means: &Matrix, j: usize, i: usize) -> Result<QuadFormSet> {
    if i >= labels.n() {
        return Err(Error::DimMismatch(format!("sample {i} out of range for n = {}", labels.n())));
    }
    Ok(loo_class(x, labels, means, j)?.at(i))
}

/// `A⁻¹v_j` for the full Gram matrix.
pub fn full_g(x: &Matrix, labels: &Labels, j: usize) -> Result<Vec<f64>> {
    let inv = full_rank_pinv(&gram(x))?;
    inv.apply(&labels.indicator(j))
}

/// One row of the lemma-order table.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaRow {
    pub seed: u64,
    pub j: usize,
    pub i: usize,
    pub s: f64,
    pub t: f64,
    pub h: f64,
    pub g: f64,
    pub f: f64,
    pub det: f64,
    pub s_norm: f64,
    pub t_norm: f64,
    pub h_norm: f64,
    pub f_norm: f64,
    /// `g·p` when `j = y_i`.
    pub g_own_norm: Option<f64>,
    /// `|g|·k²p` when `j ≠ y_i`.
    pub g_cross_norm: Option<f64>,
}

/// `ρ̃ = min(1, √(ln(2n)/k))`
pub fn rho_tilde(n: usize, k: usize) -> f64 {
    ((2.0 * n as f64).ln() / k as f64).sqrt().min(1.0)
}

/// Normalized leave-one-out statistics for every `(seed, j, i)`.
pub fn lemma_order_check(spec: &GmmSpec, n: usize, seeds: &[u64]) -> Result<Vec<LemmaRow>> {
    let (p, k) = (spec.p() as f64, spec.k());
    let kf = k as f64;
    let nf = n as f64;
    let rho = rho_tilde(n, k);
    let mut rows = Vec::new();
    for &seed in seeds {
        let data = sample_gmm(spec, n, seed)?;
        for j in 0..k {
            let lc = loo_class(&data.x, &data.labels, spec.means(), j)?;
            let mu = lc.mu_norm_sq.sqrt();
            for i in 0..n {
                let own = data.labels.get(i) == j;
                rows.push(LemmaRow {
                    seed,
                    j,
                    i,
                    s: lc.s,
                    t: lc.t,
                    h: lc.h,
                    g: lc.g[i],
                    f: lc.f[i],
                    det: lc.det,
                    s_norm: lc.s * kf * p / nf,
                    t_norm: lc.t * p / (nf * lc.mu_norm_sq),
                    h_norm: lc.h.abs() * kf.sqrt() * p / (nf * mu * rho),
                    f_norm: lc.f[i].abs() * p / (nf.sqrt() * mu),
                    g_own_norm: own.then(|| lc.g[i] * p),
                    g_cross_norm: (!own).then(|| lc.g[i].abs() * kf * kf * p),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_lemma_csv<W: Write>(rows: &[LemmaRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

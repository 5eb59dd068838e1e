//! Seeded synthetic data: Gaussian mixtures, multinomial-logit samples,
//! orthogonal mean matrices, bi-level spectra and neural-collapse features.
//!
//! Labels are 0-based throughout.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::Stream;

/// Class labels in `0..k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    classes: Vec<usize>,
    k: usize,
}

impl Labels {
    pub fn new(classes: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c >= k) {
            return Err(Error::InvalidInput(format!("label {bad} out of range for k = {k}")));
        }
        Ok(Labels { classes, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.classes.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.classes
    }

    pub fn get(&self, i: usize) -> usize {
        self.classes[i]
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &c in &self.classes {
            counts[c] += 1;
        }
        counts
    }

    /// Row `c` of the one-hot matrix, `v_c`.
    pub fn indicator(&self, c: usize) -> Vec<f64> {
        self.classes.iter().map(|&y| if y == c { 1.0 } else { 0.0 }).collect()
    }

    /// One-hot matrix `Y` (`k × n`).
    pub fn one_hot(&self) -> Matrix {
        Matrix::from_fn(self.k, self.n(), |c, i| if self.classes[i] == c { 1.0 } else { 0.0 })
    }

    /// Recovers labels from a one-hot matrix, validating exactly one 1 per column.
    pub fn from_one_hot(y: &Matrix) -> Result<Self> {
        let mut classes = Vec::with_capacity(y.cols());
        for i in 0..y.cols() {
            let col = y.col(i);
            let ones: Vec<usize> = (0..col.len()).filter(|&c| col[c] == 1.0).collect();
            let zeros = col.iter().filter(|&&v| v == 0.0).count();
            if ones.len() != 1 || zeros + 1 != col.len() {
                return Err(Error::InvalidInput(format!("column {i} is not one-hot")));
            }
            classes.push(ones[0]);
        }
        Labels::new(classes, y.rows())
    }
}

/// How training labels are assigned.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    /// I.i.d. draws from the model's label distribution.
    #[default]
    Random,
    /// Sample `i` gets class `i mod k` (GMM only; ignored by the logit model).
    Balanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Gmm,
    Mlm,
    NeuralCollapse,
    External,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::Gmm => "gmm",
            Provenance::Mlm => "mlm",
            Provenance::NeuralCollapse => "nc",
            Provenance::External => "external",
        };
        f.write_str(s)
    }
}

/// A training instance: features `X` (`p × n`) and labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Labels,
    pub seed: u64,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Labels, seed: u64, provenance: Provenance) -> Result<Self> {
        if x.cols() != labels.n() {
            return Err(Error::DimMismatch(format!(
                "{} feature columns but {} labels",
                x.cols(),
                labels.n()
            )));
        }
        Ok(Dataset { x, labels, seed, provenance })
    }

    pub fn p(&self) -> usize {
        self.x.rows()
    }

    pub fn n(&self) -> usize {
        self.x.cols()
    }

    pub fn k(&self) -> usize {
        self.labels.k()
    }

    pub fn y(&self) -> Matrix {
        self.labels.one_hot()
    }

    /// CSV export: a `# p,n,k,seed` header line, a comment line with the
    /// values, then one row per sample holding the label and `p` features.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# p,n,k,seed")?;
        writeln!(w, "# {},{},{},{}", self.p(), self.n(), self.k(), self.seed)?;
        for i in 0..self.n() {
            write!(w, "{}", self.labels.get(i))?;
            for v in self.x.col(i) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut header = None;
        for line in lines.by_ref() {
            let line = line?;
            let body = line.trim();
            if let Some(rest) = body.strip_prefix('#') {
                let rest = rest.trim();
                if rest.starts_with(|c: char| c.is_ascii_digit()) {
                    header = Some(rest.to_string());
                    break;
                }
            } else if !body.is_empty() {
                return Err(Error::Format("missing `# p,n,k,seed` header".into()));
            }
        }
        let header = header.ok_or_else(|| Error::Format("missing header values".into()))?;
        let fields: Vec<u64> = header
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("bad header `{header}`: {e}")))?;
        let [p, n, k, seed] = fields[..] else {
            return Err(Error::Format(format!("header needs 4 values, got `{header}`")));
        };
        let (p, n, k) = (p as usize, n as usize, k as usize);
        let mut data = Vec::with_capacity(p * n);
        let mut classes = Vec::with_capacity(n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let label = parts
                .next()
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::Format(format!("bad label in row {}", classes.len())))?;
            classes.push(label);
            let before = data.len();
            for part in parts {
                let v = part
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad feature `{part}`: {e}")))?;
                data.push(v);
            }
            if data.len() - before != p {
                return Err(Error::Format(format!(
                    "row {} has {} features, expected {p}",
                    classes.len() - 1,
                    data.len() - before
                )));
            }
        }
        if classes.len() != n {
            return Err(Error::Format(format!("expected {n} rows, found {}", classes.len())));
        }
        let x = Matrix::from_col_major(p, n, data)?;
        Dataset::new(x, Labels::new(classes, k)?, seed, Provenance::External)
    }
}

/// Columns `energy · e_c` for `c < k`.
pub fn orthogonal_means(k: usize, p: usize, energy: f64) -> Result<Matrix> {
    if p < k {
        return Err(Error::DimTooSmall { p, k });
    }
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::InvalidInput(format!("energy must be positive, got {energy}")));
    }
    Ok(Matrix::from_fn(p, k, |r, c| if r == c { energy } else { 0.0 }))
}

/// Gaussian mixture `x = μ_y + q`, `q ~ N(0, I_p)`.
#[derive(Clone, Debug)]
pub struct GmmSpec {
    means: Matrix,
    priors: Vec<f64>,
    labels: LabelScheme,
}

impl GmmSpec {
    pub fn new(means: Matrix, priors: Vec<f64>) -> Result<Self> {
        let k = means.cols();
        if priors.len() != k {
            return Err(Error::DimMismatch(format!("{} priors for {k} classes", priors.len())));
        }
        if priors.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("priors must be non-negative".into()));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("priors sum to {total}, not 1")));
        }
        Ok(GmmSpec { means, priors, labels: LabelScheme::Random })
    }

    /// Uniform priors with orthogonal equal-energy means of norm `mu_norm`.
    pub fn orthogonal(k: usize, p: usize, mu_norm: f64) -> Result<Self> {
        GmmSpec::new(orthogonal_means(k, p, mu_norm)?, vec![1.0 / k as f64; k])
    }

    pub fn with_label_scheme(mut self, scheme: LabelScheme) -> Self {
        self.labels = scheme;
        self
    }

    pub fn k(&self) -> usize {
        self.means.cols()
    }

    pub fn p(&self) -> usize {
        self.means.rows()
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        self.means.col(c)
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn label_scheme(&self) -> LabelScheme {
        self.labels
    }

    /// Writes `μ_c + q` into `out`.
    pub fn draw_conditional(&self, c: usize, stream: &mut Stream, out: &mut [f64]) {
        stream.fill_normal(out);
        for (o, m) in out.iter_mut().zip(self.mean(c)) {
            *o += m;
        }
    }
}

/// Multinomial logit model: `x ~ N(0, diag λ)`, `P(y = c | x) ∝ exp(μ_cᵀx)`.
#[derive(Clone, Debug)]
pub struct MlmSpec {
    means: Matrix,
    spectrum: Vec<f64>,
}

impl MlmSpec {
    pub fn new(means: Matrix, spectrum: Vec<f64>) -> Result<Self> {
        if spectrum.len() != means.rows() {
            return Err(Error::DimMismatch(format!(
                "spectrum of length {} for p = {}",
                spectrum.len(),
                means.rows()
            )));
        }
        if spectrum.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput("spectrum entries must be positive".into()));
        }
        Ok(MlmSpec { means, spectrum })
    }

    /// Identity covariance with orthogonal means of norm `mu_norm`.
    pub fn isotropic(k: usize, p: usize, mu_norm: f64) -> Result<Self> {
        MlmSpec::new(orthogonal_means(k, p, mu_norm)?, vec![1.0; p])
    }

    /// Bi-level covariance with means `e_c / √λ_H`, which requires `s ≥ k`.
    pub fn bilevel(params: &BilevelParams, k: usize) -> Result<Self> {
        let spectrum = bilevel_spectrum(params)?;
        let s = params.s();
        if s < k {
            return Err(Error::InvalidRegime(format!(
                "bi-level means need s = {s} ≥ k = {k} spiked directions"
            )));
        }
        let means = orthogonal_means(k, spectrum.len(), 1.0 / params.lambda_high().sqrt())?;
        MlmSpec::new(means, spectrum)
    }

    pub fn k(&self) -> usize {
        self.means.cols()
    }

    pub fn p(&self) -> usize {
        self.means.rows()
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Draws `x` into `out` and returns its label.
    pub fn draw(&self, stream: &mut Stream, out: &mut [f64]) -> usize {
        for (o, l) in out.iter_mut().zip(&self.spectrum) {
            *o = stream.normal() * l.sqrt();
        }
        let probs = self.posterior(out);
        stream.categorical(&probs)
    }

    /// `softmax(Mᵀx)`.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.k()).map(|c| dot(self.means.col(c), x)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }
}

#[derive(Clone, Debug)]
pub enum GenerativeModel {
    Gmm(GmmSpec),
    Mlm(MlmSpec),
}

impl GenerativeModel {
    pub fn k(&self) -> usize {
        match self {
            GenerativeModel::Gmm(s) => s.k(),
            GenerativeModel::Mlm(s) => s.k(),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            GenerativeModel::Gmm(s) => s.p(),
            GenerativeModel::Mlm(s) => s.p(),
        }
    }

    pub fn means(&self) -> &Matrix {
        match self {
            GenerativeModel::Gmm(s) => s.means(),
            GenerativeModel::Mlm(s) => s.means(),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            GenerativeModel::Gmm(s) => sample_gmm(s, n, seed),
            GenerativeModel::Mlm(s) => sample_mlm(s, n, seed),
        }
    }
}

pub fn sample_gmm(spec: &GmmSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let (p, k) = (spec.p(), spec.k());
    let mut stream = Stream::from_seed(seed);
    let mut x = Matrix::zeros(p, n);
    let mut classes = Vec::with_capacity(n);
    for i in 0..n {
        let c = match spec.labels {
            LabelScheme::Random => stream.categorical(&spec.priors),
            LabelScheme::Balanced => i % k,
        };
        spec.draw_conditional(c, &mut stream, x.col_mut(i));
        classes.push(c);
    }
    Dataset::new(x, Labels::new(classes, k)?, seed, Provenance::Gmm)
}

pub fn sample_mlm(spec: &MlmSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let mut stream = Stream::from_seed(seed);
    let mut x = Matrix::zeros(spec.p(), n);
    let mut classes = Vec::with_capacity(n);
    for i in 0..n {
        classes.push(spec.draw(&mut stream, x.col_mut(i)));
    }
    Dataset::new(x, Labels::new(classes, spec.k())?, seed, Provenance::Mlm)
}

/// Neural-collapse features: `m` copies of each column of the simplex ETF
/// `M = α√(k/n)·U(I − 11ᵀ/k)`, sample `i` in class `i mod k`.
pub fn neural_collapse_features(k: usize, m: usize, p: usize, alpha: f64) -> Result<Dataset> {
    if p < k {
        return Err(Error::DimTooSmall { p, k });
    }
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidInput("alpha must be finite and nonzero".into()));
    }
    if m == 0 || k == 0 {
        return Err(Error::InvalidInput("need k ≥ 1 and m ≥ 1".into()));
    }
    let n = k * m;
    let scale = alpha * (k as f64 / n as f64).sqrt();
    let etf = etf_means(k, p, scale);
    let classes: Vec<usize> = (0..n).map(|i| i % k).collect();
    let x = Matrix::from_fn(p, n, |r, i| etf[(r, classes[i])]);
    Dataset::new(x, Labels::new(classes, k)?, 0, Provenance::NeuralCollapse)
}

/// `scale · U(I − 11ᵀ/k)` with `U` the first `k` standard basis vectors.
pub fn etf_means(k: usize, p: usize, scale: f64) -> Matrix {
    let inv_k = 1.0 / k as f64;
    Matrix::from_fn(p, k, |r, c| {
        if r >= k {
            0.0
        } else if r == c {
            scale * (1.0 - inv_k)
        } else {
            -scale * inv_k
        }
    })
}

/// Bi-level ensemble parameters `(n, m, q, r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilevelParams {
    pub n: usize,
    pub m: f64,
    pub q: f64,
    pub r: f64,
}

impl BilevelParams {
    pub fn new(n: usize, m: f64, q: f64, r: f64) -> Result<Self> {
        let params = BilevelParams { n, m, q, r };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let BilevelParams { n, m, q, r } = *self;
        if !(m > 1.0) {
            return Err(Error::InvalidRegime(format!("need m > 1, got {m}")));
        }
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidRegime(format!("need 0 ≤ r < 1, got {r}")));
        }
        if !(q > 0.0 && q < m - r) {
            return Err(Error::InvalidRegime(format!("need 0 < q < m − r = {}, got {q}", m - r)));
        }
        if n < 2 {
            return Err(Error::InvalidRegime("need n ≥ 2".into()));
        }
        let (p, s) = (self.p(), self.s());
        if !(s < n && n < p) {
            return Err(Error::InvalidRegime(format!("need s < n < p, got s={s}, n={n}, p={p}")));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        (self.n as f64).powf(self.m).round() as usize
    }

    pub fn s(&self) -> usize {
        ((self.n as f64).powf(self.r).round() as usize).max(1)
    }

    pub fn a(&self) -> f64 {
        (self.n as f64).powf(-self.q)
    }

    pub fn lambda_high(&self) -> f64 {
        self.a() * self.p() as f64 / self.s() as f64
    }

    pub fn lambda_low(&self) -> f64 {
        let (p, s) = (self.p() as f64, self.s() as f64);
        (1.0 - self.a()) * p / (p - s)
    }
}

/// `s` entries `λ_H` followed by `p − s` entries `λ_L`.
pub fn bilevel_spectrum(params: &BilevelParams) -> Result<Vec<f64>> {
    params.validate()?;
    let (p, s) = (params.p(), params.s());
    let (hi, lo) = (params.lambda_high(), params.lambda_low());
    Ok((0..p).map(|j| if j < s { hi } else { lo }).collect())
}

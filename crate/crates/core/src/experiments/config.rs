use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{BilevelParams, LabelScheme};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Gmm,
    Mlm,
    Nc,
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelFamily::Gmm => "gmm",
            ModelFamily::Mlm => "mlm",
            ModelFamily::Nc => "nc",
        })
    }
}

/// Bi-level exponents; `n` comes from the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilevelShape {
    pub m: f64,
    pub q: f64,
    pub r: f64,
}

/// Cartesian grid. `mu_scale` sets `‖μ‖ = mu_scale·√p` (for `nc` it is the
/// ETF scale `α`). When `bilevel` is non-empty the logit model uses a
/// bi-level spectrum with means `e_c/√λ_H`; `p` is derived from `n` and both
/// `p` and `mu_scale` are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n: Vec<usize>,
    #[serde(default)]
    pub p: Vec<usize>,
    pub k: Vec<usize>,
    #[serde(default = "default_mu_scale")]
    pub mu_scale: Vec<f64>,
    #[serde(default)]
    pub bilevel: Vec<BilevelShape>,
}

fn default_mu_scale() -> Vec<f64> {
    vec![1.0]
}

/// Constants of the error-rate function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for RateConstants {
    fn default() -> Self {
        RateConstants { c1: 1.0, c2: 1.0, c3: 1.0, c4: 1.0 }
    }
}

impl RateConstants {
    pub fn as_array(&self) -> [f64; 4] {
        [self.c1, self.c2, self.c3, self.c4]
    }
}

/// Constants of the sufficient-condition predicates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConstants {
    pub c1: f64,
    pub c2: f64,
}

impl Default for ConditionConstants {
    fn default() -> Self {
        ConditionConstants { c1: DEFAULT_CONDITION_C1, c2: DEFAULT_CONDITION_C2 }
    }
}

/// Empirically calibrated defaults; see the README.
pub const DEFAULT_CONDITION_C1: f64 = 0.25;
pub const DEFAULT_CONDITION_C2: f64 = 0.1;

pub const DEFAULT_TRIALS: usize = 20;
pub const PAPER_SCALE_TRIALS: usize = 100;

/// A fully resolved sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub experiment: String,
    pub model: ModelFamily,
    pub grid: Grid,
    pub trials: usize,
    pub base_seed: u64,
    /// Test points per trial for error estimates; 0 skips them.
    pub n_test: usize,
    pub tol: f64,
    pub active_tol: f64,
    pub label_scheme: LabelScheme,
    pub constants: RateConstants,
    pub condition: ConditionConstants,
    pub output: PathBuf,
}

/// Every key optional, so files and flags can be layered.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPatch {
    pub experiment: Option<String>,
    pub model: Option<ModelFamily>,
    pub grid: Option<GridPatch>,
    pub trials: Option<usize>,
    pub base_seed: Option<u64>,
    pub n_test: Option<usize>,
    pub tol: Option<f64>,
    pub active_tol: Option<f64>,
    pub label_scheme: Option<LabelScheme>,
    pub constants: Option<RateConstants>,
    pub condition: Option<ConditionConstants>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPatch {
    pub n: Option<Vec<usize>>,
    pub p: Option<Vec<usize>>,
    pub k: Option<Vec<usize>>,
    pub mu_scale: Option<Vec<f64>>,
    pub bilevel: Option<Vec<BilevelShape>>,
}

impl SweepPatch {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(mut self, over: SweepPatch) -> SweepPatch {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(experiment, model, trials, base_seed, n_test, tol, active_tol, label_scheme, constants, condition, output);
        if let Some(g) = over.grid {
            let mut base = self.grid.unwrap_or_default();
            macro_rules! take_grid {
                ($($f:ident),*) => { $( if g.$f.is_some() { base.$f = g.$f; } )* };
            }
            take_grid!(n, p, k, mu_scale, bilevel);
            self.grid = Some(base);
        }
        self
    }

    /// Fills unset keys with defaults and validates.
    pub fn resolve(self) -> Result<SweepConfig> {
        let grid = self.grid.unwrap_or_default();
        let experiment = self.experiment.unwrap_or_else(|| "custom".into());
        let output = self.output.unwrap_or_else(|| PathBuf::from(format!("{experiment}.csv")));
        let config = SweepConfig {
            model: self.model.ok_or_else(|| Error::Config("model is required".into()))?,
            grid: Grid {
                n: grid.n.ok_or_else(|| Error::Config("grid.n is required".into()))?,
                p: grid.p.unwrap_or_default(),
                k: grid.k.ok_or_else(|| Error::Config("grid.k is required".into()))?,
                mu_scale: grid.mu_scale.unwrap_or_else(default_mu_scale),
                bilevel: grid.bilevel.unwrap_or_default(),
            },
            experiment,
            trials: self.trials.unwrap_or(DEFAULT_TRIALS),
            base_seed: self.base_seed.unwrap_or(0),
            n_test: self.n_test.unwrap_or(10_000),
            tol: self.tol.unwrap_or(1e-8),
            active_tol: self.active_tol.unwrap_or(1e-6),
            label_scheme: self.label_scheme.unwrap_or_default(),
            constants: self.constants.unwrap_or_default(),
            condition: self.condition.unwrap_or_default(),
            output,
        };
        config.validate()?;
        Ok(config)
    }
}

/// One grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub index: usize,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub mu_scale: f64,
    pub mu_norm: f64,
    pub bilevel: Option<BilevelParams>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.n.is_empty() || g.k.is_empty() || g.mu_scale.is_empty() {
            return Err(Error::Config("grid axes n, k and mu_scale must be non-empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.active_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        let uses_bilevel = self.model == ModelFamily::Mlm && !g.bilevel.is_empty();
        if !uses_bilevel && g.p.is_empty() {
            return Err(Error::Config("grid.p must be non-empty".into()));
        }
        if !g.bilevel.is_empty() && self.model != ModelFamily::Mlm {
            return Err(Error::Config("bi-level grids apply to the mlm model only".into()));
        }
        for pt in self.points()? {
            if pt.k < 2 {
                return Err(Error::Config(format!("k = {} must be at least 2", pt.k)));
            }
            if pt.n == 0 || pt.p < pt.k {
                return Err(Error::Config(format!("point {}: need n ≥ 1 and p ≥ k", pt.index)));
            }
            if self.model == ModelFamily::Nc && pt.n % pt.k != 0 {
                return Err(Error::Config(format!("nc model needs k | n, got n = {}, k = {}", pt.n, pt.k)));
            }
            if !(pt.mu_scale > 0.0) {
                return Err(Error::Config("mu_scale entries must be positive".into()));
            }
        }
        Ok(())
    }

    /// Grid points in row-major order over `(bilevel | p, k, mu_scale, n)`.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let g = &self.grid;
        let mut out = Vec::new();
        if self.model == ModelFamily::Mlm && !g.bilevel.is_empty() {
            for shape in &g.bilevel {
                for &k in &g.k {
                    {
                        for &n in &g.n {
                            let params = BilevelParams::new(n, shape.m, shape.q, shape.r)
                                .map_err(|e| Error::Config(e.to_string()))?;
                            if params.s() < k {
                                return Err(Error::Config(format!(
                                    "bi-level s = {} below k = {k} at n = {n}",
                                    params.s()
                                )));
                            }
                            out.push(GridPoint {
                                index: out.len(),
                                n,
                                p: params.p(),
                                k,
                                mu_scale: 1.0,
                                mu_norm: 1.0 / params.lambda_high().sqrt(),
                                bilevel: Some(params),
                            });
                        }
                    }
                }
            }
        } else {
            for &p in &g.p {
                for &k in &g.k {
                    for &mu_scale in &g.mu_scale {
                        for &n in &g.n {
                            let mu_norm = match self.model {
                                ModelFamily::Nc => mu_scale,
                                _ => mu_scale * (p as f64).sqrt(),
                            };
                            out.push(GridPoint { index: out.len(), n, p, k, mu_scale, mu_norm, bilevel: None });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Built-in sweeps reproducing the standard figures at desk scale.
pub fn preset(name: &str) -> Result<SweepPatch> {
    let tens: Vec<usize> = (1..=10).map(|i| 10 * i).collect();
    let patch = match name {
        "fig3" => SweepPatch {
            experiment: Some("fig3".into()),
            model: Some(ModelFamily::Gmm),
            grid: Some(GridPatch {
                n: Some(tens),
                p: Some(vec![1000]),
                k: Some(vec![4, 7]),
                mu_scale: Some(vec![0.2, 0.3, 0.4]),
                bilevel: None,
            }),
            n_test: Some(0),
            ..Default::default()
        },
        "fig4" => SweepPatch {
            experiment: Some("fig4".into()),
            model: Some(ModelFamily::Mlm),
            grid: Some(GridPatch {
                n: Some(tens),
                p: Some(vec![1000]),
                k: Some(vec![3, 4, 5, 6]),
                mu_scale: Some(vec![1.0]),
                bilevel: None,
            }),
            n_test: Some(0),
            ..Default::default()
        },
        "fig5" => SweepPatch {
            experiment: Some("fig5".into()),
            model: Some(ModelFamily::Mlm),
            grid: Some(GridPatch {
                n: Some(vec![16, 25, 36, 49, 64, 81, 100]),
                p: None,
                k: Some(vec![3]),
                mu_scale: Some(vec![1.0]),
                bilevel: Some(
                    [0.3, 0.6, 0.9].iter().map(|&q| BilevelShape { m: 1.5, q, r: 0.5 }).collect(),
                ),
            }),
            ..Default::default()
        },
        "fig6" => SweepPatch {
            experiment: Some("fig6".into()),
            model: Some(ModelFamily::Gmm),
            grid: Some(GridPatch {
                n: Some(vec![40]),
                p: Some(vec![50, 100, 200, 300, 400, 600, 800, 1000, 1200]),
                k: Some(vec![4, 6]),
                mu_scale: Some(vec![0.2, 0.3, 0.4]),
                bilevel: None,
            }),
            ..Default::default()
        },
        other => return Err(Error::Config(format!("unknown preset `{other}` (fig3, fig4, fig5, fig6)"))),
    };
    Ok(patch)
}

pub const PRESETS: [&str; 4] = ["fig3", "fig4", "fig5", "fig6"];

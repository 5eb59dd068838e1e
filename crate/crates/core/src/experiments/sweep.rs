use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{GridPoint, ModelFamily, SweepConfig};
use crate::datagen::{
    neural_collapse_features, sample_gmm, sample_mlm, Dataset, GenerativeModel, GmmSpec, MlmSpec,
};
use crate::equivalence::{
    det_condition_with, interpolation_fraction, sufficient_condition_gmm, sufficient_condition_mlm,
};
use crate::error::{Error, Result};
use crate::linalg::{gram, pinv_default};
use crate::metrics::{gmm_bound_rate, gmm_pairwise_q_bound, mc_error, mlm_excess_risk, mlm_pairwise_bound};
use crate::rng::{derive_key, Stream};
use crate::solvers::{fit_mni_with, fit_multiclass_svm, simplex_targets, SolverOptions};

/// Environment variable that sizes the worker pool.
pub const THREADS_ENV: &str = "INTERP_LAB_THREADS";

/// Seed of trial `trial` at grid point `point`.
pub fn trial_seed(base_seed: u64, point: usize, trial: usize) -> u64 {
    Stream::from_seed(base_seed).derive(&[point as u64, trial as u64]).key()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Unconverged,
    NotSeparable,
    Failed(String),
}

impl std::fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrialStatus::Ok => f.write_str("ok"),
            TrialStatus::Unconverged => f.write_str("unconverged"),
            TrialStatus::NotSeparable => f.write_str("not_separable"),
            TrialStatus::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

/// One row of the sweep CSV.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub point: GridPoint,
    pub trial: usize,
    pub seed: u64,
    pub det_con: Option<bool>,
    pub det_min: Option<f64>,
    pub interp_fraction: Option<f64>,
    pub svm_equals_mni: Option<bool>,
    pub weight_gap: Option<f64>,
    pub duality_gap: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub iterations: Option<usize>,
    pub err_total: Option<f64>,
    pub err_mni: Option<f64>,
    pub se: Option<f64>,
    pub err_class: Vec<f64>,
    pub bound_rate: Option<f64>,
    pub pairwise_bound: Option<f64>,
    pub excess: Option<f64>,
    pub sufficient: Option<bool>,
    pub status: TrialStatus,
    pub wall_seconds: f64,
}

impl TrialRecord {
    fn empty(point: GridPoint, trial: usize, seed: u64) -> Self {
        TrialRecord {
            point,
            trial,
            seed,
            det_con: None,
            det_min: None,
            interp_fraction: None,
            svm_equals_mni: None,
            weight_gap: None,
            duality_gap: None,
            kkt_residual: None,
            iterations: None,
            err_total: None,
            err_mni: None,
            se: None,
            err_class: Vec::new(),
            bound_rate: None,
            pairwise_bound: None,
            excess: None,
            sufficient: None,
            status: TrialStatus::Ok,
            wall_seconds: 0.0,
        }
    }

    /// `k^{1.5}n^{1.5}‖μ‖/p`
    pub fn rescale_gmm(&self) -> f64 {
        let GridPoint { n, p, k, mu_norm, .. } = self.point;
        (k as f64).powf(1.5) * (n as f64).powf(1.5) * mu_norm / p as f64
    }

    /// `k²n·ln(kn)/p`
    pub fn rescale_mlm(&self) -> f64 {
        let GridPoint { n, p, k, .. } = self.point;
        let (n, k) = (n as f64, k as f64);
        k * k * n * (k * n).ln() / p as f64
    }

    /// `kn·ln(kn)/p`
    pub fn rescale_kn(&self) -> f64 {
        let GridPoint { n, p, k, .. } = self.point;
        let (n, k) = (n as f64, k as f64);
        k * n * (k * n).ln() / p as f64
    }

    fn fields(&self, model: ModelFamily, kmax: usize) -> Vec<String> {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        let pt = &self.point;
        let bl = pt.bilevel;
        let mut out = vec![
            pt.index.to_string(),
            self.trial.to_string(),
            self.seed.to_string(),
            model.to_string(),
            pt.n.to_string(),
            pt.p.to_string(),
            pt.k.to_string(),
            pt.mu_norm.to_string(),
            opt(bl.map(|b| b.m)),
            opt(bl.map(|b| b.q)),
            opt(bl.map(|b| b.r)),
            opt(self.det_con),
            opt(self.det_min),
            opt(self.interp_fraction),
            opt(self.svm_equals_mni),
            opt(self.weight_gap),
            opt(self.duality_gap),
            opt(self.kkt_residual),
            opt(self.iterations),
            opt(self.err_total),
            opt(self.err_mni),
            opt(self.se),
        ];
        for c in 0..kmax {
            out.push(opt(self.err_class.get(c)));
        }
        out.extend([
            opt(self.bound_rate),
            opt(self.pairwise_bound),
            opt(self.excess),
            opt(self.sufficient),
            self.rescale_gmm().to_string(),
            self.rescale_mlm().to_string(),
            self.rescale_kn().to_string(),
            self.status.to_string(),
        ]);
        out
    }
}

/// Column names for a grid whose largest class count is `kmax`.
pub fn columns(kmax: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "point", "trial", "seed", "model", "n", "p", "k", "mu_norm", "bl_m", "bl_q", "bl_r", "det_con",
        "det_min", "interp_fraction", "svm_equals_mni", "weight_gap", "duality_gap", "kkt_residual",
        "iterations", "err_total", "err_mni", "se",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=kmax).map(|c| format!("err_class_{c}")));
    cols.extend(
        [
            "bound_rate",
            "pairwise_bound",
            "excess",
            "sufficient",
            "rescale_k15n15mu_p",
            "rescale_k2nlogkn_p",
            "rescale_knlogkn_p",
            "status",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    cols
}

enum Model {
    Gmm(GmmSpec),
    Mlm(MlmSpec),
    Nc,
}

fn build_model(cfg: &SweepConfig, pt: &GridPoint) -> Result<Model> {
    Ok(match cfg.model {
        ModelFamily::Gmm => Model::Gmm(GmmSpec::orthogonal(pt.k, pt.p, pt.mu_norm)?.with_label_scheme(cfg.label_scheme)),
        ModelFamily::Mlm => match &pt.bilevel {
            Some(params) => Model::Mlm(MlmSpec::bilevel(params, pt.k)?),
            None => Model::Mlm(MlmSpec::isotropic(pt.k, pt.p, pt.mu_norm)?),
        },
        ModelFamily::Nc => Model::Nc,
    })
}

/// Runs one trial. Failures are recorded in the status column.
pub fn run_trial(cfg: &SweepConfig, pt: &GridPoint, trial: usize) -> TrialRecord {
    let start = Instant::now();
    let seed = trial_seed(cfg.base_seed, pt.index, trial);
    let mut rec = TrialRecord::empty(*pt, trial, seed);
    if let Err(e) = fill_trial(cfg, pt, &mut rec) {
        rec.status = match e {
            Error::NotSeparable { .. } => TrialStatus::NotSeparable,
            other => TrialStatus::Failed(other.to_string()),
        };
    }
    rec.wall_seconds = start.elapsed().as_secs_f64();
    rec
}

fn fill_trial(cfg: &SweepConfig, pt: &GridPoint, rec: &mut TrialRecord) -> Result<()> {
    let model = build_model(cfg, pt)?;
    let data: Dataset = match &model {
        Model::Gmm(spec) => sample_gmm(spec, pt.n, rec.seed)?,
        Model::Mlm(spec) => sample_mlm(spec, pt.n, rec.seed)?,
        Model::Nc => neural_collapse_features(pt.k, pt.n / pt.k, pt.p, pt.mu_norm)?,
    };
    rec.sufficient = match &model {
        Model::Gmm(_) => {
            Some(sufficient_condition_gmm(pt.n, pt.p, pt.k, pt.mu_norm, cfg.condition.c1, cfg.condition.c2))
        }
        Model::Mlm(spec) => Some(sufficient_condition_mlm(pt.n, pt.k, spec.spectrum(), cfg.condition.c1, cfg.condition.c2)),
        Model::Nc => None,
    };
    if let Model::Gmm(_) = model {
        rec.bound_rate = Some(gmm_bound_rate(pt.n, pt.p, pt.k, pt.mu_norm, cfg.constants.as_array()));
    }

    let a_pinv = pinv_default(&gram(&data.x))?;
    let det = det_condition_with(&a_pinv, &data.labels, 0.0);
    rec.det_con = Some(det.verdict);
    rec.det_min = Some(det.min_value);

    let opts = SolverOptions { tol: cfg.tol, max_iters: None, active_tol: cfg.active_tol };
    let svm = match fit_multiclass_svm(&data.x, &data.labels, &opts) {
        Ok(fit) => fit,
        Err(Error::Unconverged { best: Some(best), .. }) => {
            rec.status = TrialStatus::Unconverged;
            *best
        }
        Err(e) => return Err(e),
    };
    let clf = &svm.classifier;
    rec.duality_gap = Some(clf.diagnostics.duality_gap);
    rec.kkt_residual = Some(clf.diagnostics.kkt_residual);
    rec.iterations = Some(clf.diagnostics.iterations);

    let mni = fit_mni_with(&data.x, &a_pinv, simplex_targets(&data.labels).matrix())?;
    let w = clf.weights();
    let gap = w.sub(mni.weights())?.frobenius_norm();
    rec.weight_gap = Some(gap);
    rec.svm_equals_mni = Some(gap <= cfg.active_tol * (1.0 + w.frobenius_norm()));
    rec.interp_fraction = Some(interpolation_fraction(w, &data.x, &data.labels, cfg.active_tol)?.fraction);

    let test_seed = derive_key(rec.seed, &[1]);
    match model {
        Model::Gmm(spec) => {
            let per_class = gmm_pairwise_q_bound(clf, &spec)?;
            rec.pairwise_bound = Some(per_class.iter().zip(spec.priors()).map(|(b, q)| b * q).sum());
            if cfg.n_test > 0 {
                let model = GenerativeModel::Gmm(spec);
                let est = mc_error(clf, &model, cfg.n_test, test_seed)?;
                rec.err_mni = Some(mc_error(&mni, &model, cfg.n_test, test_seed)?.total);
                rec.err_total = Some(est.total);
                rec.se = Some(est.se_total);
                rec.err_class = est.per_class;
            }
        }
        Model::Mlm(spec) => {
            if cfg.n_test > 0 {
                let excess = mlm_excess_risk(clf, &spec, cfg.n_test, test_seed)?;
                rec.pairwise_bound = Some(excess.pairwise_bound);
                rec.excess = Some(excess.excess);
                let model = GenerativeModel::Mlm(spec);
                let est = mc_error(clf, &model, cfg.n_test, test_seed)?;
                rec.err_mni = Some(mc_error(&mni, &model, cfg.n_test, test_seed)?.total);
                rec.err_total = Some(est.total);
                rec.se = Some(est.se_total);
                rec.err_class = est.per_class;
            } else {
                rec.pairwise_bound = Some(mlm_pairwise_bound(clf, &spec)?);
            }
        }
        Model::Nc => {}
    }
    Ok(())
}

/// Where a sweep wrote its artifacts.
#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub output: PathBuf,
    pub summary: PathBuf,
    pub timings: PathBuf,
    /// Trials run by this invocation.
    pub ran: usize,
    /// Trials found complete in an existing output.
    pub resumed: usize,
    /// Rows whose status is not `ok`.
    pub failures: usize,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn summary_path(output: &Path) -> PathBuf {
    sidecar(output, "summary.json")
}

pub fn timings_path(output: &Path) -> PathBuf {
    sidecar(output, "timings.csv")
}

/// Drops a trailing partial line, returning the intact text.
fn truncate_partial(path: &Path) -> Result<String> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        text.truncate(keep);
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(text)
}

/// Creates or validates a CSV with `header`; returns completed keys.
fn open_resumable(path: &Path, header: &[String]) -> Result<BTreeSet<(usize, usize)>> {
    let mut done = BTreeSet::new();
    let text = if path.exists() { truncate_partial(path)? } else { String::new() };
    if text.is_empty() {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(header)?;
        w.flush()?;
        return Ok(done);
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let existing: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if existing != header {
        return Err(Error::Config(format!(
            "{} exists with different columns; remove it or choose another output",
            path.display()
        )));
    }
    for rec in rdr.records() {
        let rec = rec?;
        let key = |i: usize| -> Result<usize> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad row in {}", path.display())))
        };
        done.insert((key(0)?, key(1)?));
    }
    Ok(done)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let threads = match threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be at least 1")));
        }
        builder = builder.num_threads(t);
    }
    builder.build().map_err(|e| Error::Config(e.to_string()))
}

/// Runs a sweep with the pool size taken from `INTERP_LAB_THREADS`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    run_sweep_with_threads(cfg, None)
}

/// Runs every `(point, trial)` not already in the output file. Rows are
/// written in `(point, trial)` order regardless of scheduling, so the CSV
/// does not depend on the number of threads or on interruptions.
pub fn run_sweep_with_threads(cfg: &SweepConfig, threads: Option<usize>) -> Result<SweepOutcome> {
    cfg.validate()?;
    let points = cfg.points()?;
    let kmax = cfg.grid.k.iter().copied().max().unwrap_or(0);
    let header = columns(kmax);
    let done = open_resumable(&cfg.output, &header)?;
    let timings = timings_path(&cfg.output);
    let timing_header: Vec<String> = ["point", "trial", "wall_seconds"].iter().map(|s| s.to_string()).collect();
    open_resumable(&timings, &timing_header)?;

    let jobs: Vec<(usize, usize)> = points
        .iter()
        .flat_map(|pt| (0..cfg.trials).map(move |t| (pt.index, t)))
        .filter(|key| !done.contains(key))
        .collect();
    let resumed = points.len() * cfg.trials - jobs.len();

    let out_file = OpenOptions::new().append(true).open(&cfg.output)?;
    let time_file = OpenOptions::new().append(true).open(&timings)?;
    let (tx, rx) = mpsc::channel::<(usize, TrialRecord)>();
    let model = cfg.model;
    let writer = std::thread::spawn(move || -> Result<()> {
        let mut out = csv::Writer::from_writer(BufWriter::new(out_file));
        let mut times = csv::Writer::from_writer(BufWriter::new(time_file));
        let mut pending: HashMap<usize, TrialRecord> = HashMap::new();
        let mut next = 0;
        for (idx, rec) in rx {
            pending.insert(idx, rec);
            while let Some(rec) = pending.remove(&next) {
                out.write_record(rec.fields(model, kmax))?;
                times.write_record([
                    rec.point.index.to_string(),
                    rec.trial.to_string(),
                    format!("{:.6}", rec.wall_seconds),
                ])?;
                out.flush()?;
                times.flush()?;
                next += 1;
            }
        }
        Ok(())
    });

    let pool = pool(threads)?;
    pool.install(|| {
        jobs.par_iter().enumerate().for_each_with(tx, |tx, (idx, &(pi, trial))| {
            let rec = run_trial(cfg, &points[pi], trial);
            // A send error means the writer already failed; its error is reported on join.
            let _ = tx.send((idx, rec));
        })
    });
    writer.join().map_err(|_| Error::Config("writer thread panicked".into()))??;

    let summary = summarize(cfg, &cfg.output)?;
    let summary_file = summary_path(&cfg.output);
    std::fs::write(&summary_file, serde_json::to_string_pretty(&summary)?)?;
    Ok(SweepOutcome {
        output: cfg.output.clone(),
        summary: summary_file,
        timings,
        ran: jobs.len(),
        resumed,
        failures: summary.points.iter().map(|p| p.failures).sum(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Moments {
    pub fn of(values: &[f64]) -> Option<Moments> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Moments { mean, std: var.sqrt(), count: values.len() })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointSummary {
    pub point: usize,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub mu_norm: f64,
    pub trials: usize,
    pub failures: usize,
    pub stats: BTreeMap<String, Moments>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub experiment: String,
    pub config: SweepConfig,
    pub points: Vec<PointSummary>,
}

const SUMMARY_COLUMNS: [&str; 10] = [
    "det_con",
    "interp_fraction",
    "svm_equals_mni",
    "err_total",
    "err_mni",
    "bound_rate",
    "pairwise_bound",
    "excess",
    "sufficient",
    "iterations",
];

/// Per-point mean and standard deviation over trials, read back from `csv_path`.
pub fn summarize(cfg: &SweepConfig, csv_path: &Path) -> Result<SweepSummary> {
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.into()));
    let idx_point = col("point")?;
    let idx_status = col("status")?;
    let stat_idx: Vec<(usize, &str)> = SUMMARY_COLUMNS.iter().map(|c| col(c).map(|i| (i, *c))).collect::<Result<_>>()?;

    let mut per_point: BTreeMap<usize, (usize, usize, BTreeMap<&str, Vec<f64>>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let point: usize = rec[idx_point].parse().map_err(|_| Error::Format("bad point index".into()))?;
        let entry = per_point.entry(point).or_default();
        entry.0 += 1;
        if &rec[idx_status] != "ok" {
            entry.1 += 1;
        }
        for &(i, name) in &stat_idx {
            let v = match &rec[i] {
                "" => continue,
                "true" => 1.0,
                "false" => 0.0,
                s => s.parse::<f64>().map_err(|_| Error::Format(format!("bad value `{s}` in {name}")))?,
            };
            entry.2.entry(name).or_default().push(v);
        }
    }
    let points = cfg.points()?;
    let summaries = per_point
        .into_iter()
        .filter_map(|(idx, (trials, failures, values))| {
            let pt = points.get(idx)?;
            Some(PointSummary {
                point: idx,
                n: pt.n,
                p: pt.p,
                k: pt.k,
                mu_norm: pt.mu_norm,
                trials,
                failures,
                stats: values
                    .into_iter()
                    .filter_map(|(name, v)| Moments::of(&v).map(|m| (name.to_string(), m)))
                    .collect(),
            })
        })
        .collect();
    Ok(SweepSummary { experiment: cfg.experiment.clone(), config: cfg.clone(), points: summaries })
}

/// Number of data rows in a sweep CSV.
pub fn count_rows(path: &Path) -> Result<usize> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut n = 0;
    for rec in rdr.records() {
        rec?;
        n += 1;
    }
    Ok(n)
}

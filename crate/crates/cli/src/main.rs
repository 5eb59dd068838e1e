use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use interp_lab::datagen::{
    neural_collapse_features, sample_gmm, sample_mlm, BilevelParams, Dataset, GmmSpec, LabelScheme, MlmSpec,
};
use interp_lab::equivalence::{check_det_condition, certify_equivalence, interpolation_fraction};
use interp_lab::experiments::{
    plot_csv, preset, repro_barplot, run_sweep, BilevelShape, ConditionConstants, GridPatch, ModelFamily, PlotSpec,
    RateConstants, SweepPatch, PAPER_SCALE_TRIALS, PRESETS,
};
use interp_lab::solvers::{
    fit_mni, fit_multiclass_svm, fit_ova_svm, fit_ovo_svm, fit_simplex_ova_svm, LinearClassifier, SolverOptions,
};
use interp_lab::Error;

#[derive(Parser)]
#[command(name = "interp-lab", version, about = "Minimum-norm interpolation vs. multiclass SVM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset and write it as CSV.
    Gen(GenArgs),
    /// Fit one classifier to a dataset and export its weights.
    Fit(FitArgs),
    /// Check the sign condition and SVM/MNI equivalence on a dataset.
    Check(CheckArgs),
    /// Run a parameter sweep.
    #[command(long_about = SWEEP_HELP)]
    Sweep(SweepArgs),
    /// Write the inner-product table of the four-class mixture example.
    Barplot(BarplotArgs),
    /// Plot two columns of a CSV as an SVG line chart.
    Plot(PlotArgs),
}

const SWEEP_HELP: &str = "Run a parameter sweep.

Configuration is layered: built-in preset, then the JSON file, then flags.
JSON keys (all optional in a file; model, grid.n and grid.k must be set somewhere):
  experiment    name used in the summary and default output path
  model         gmm | mlm | nc
  grid.n        list of training sizes
  grid.p        list of dimensions (ignored for bi-level grids)
  grid.k        list of class counts
  grid.mu_scale list; ‖μ‖ = mu_scale·√p (ETF scale for nc)
  grid.bilevel  list of {m, q, r}; mlm only, p derived from n
  trials        trials per grid point (default 20)
  base_seed     root seed (default 0)
  n_test        test points per trial, 0 to skip errors (default 10000)
  tol           solver tolerance (default 1e-8)
  active_tol    interpolation / active-set tolerance (default 1e-6)
  label_scheme  random | balanced
  constants     {c1, c2, c3, c4} for the error-rate column
  condition     {c1, c2} for the sufficient-condition column
  output        CSV path; summary and timings are written next to it

Rows are appended in (point, trial) order; rerunning resumes an interrupted sweep.
INTERP_LAB_THREADS caps the worker pool.";

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Gmm,
    Mlm,
    Nc,
}

impl From<ModelArg> for ModelFamily {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Gmm => ModelFamily::Gmm,
            ModelArg::Mlm => ModelFamily::Mlm,
            ModelArg::Nc => ModelFamily::Nc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Random,
    Balanced,
}

impl From<SchemeArg> for LabelScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Random => LabelScheme::Random,
            SchemeArg::Balanced => LabelScheme::Balanced,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    n: usize,
    /// Dimension; derived from n for bi-level spectra.
    #[arg(long)]
    p: Option<usize>,
    /// ‖μ‖ = mu_scale·√p; ETF scale for nc.
    #[arg(long, default_value_t = 1.0)]
    mu_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    label_scheme: SchemeArg,
    /// Bi-level exponents `m,q,r` for the mlm model.
    #[arg(long, value_delimiter = ',')]
    bilevel: Option<Vec<f64>>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Mni,
    Svm,
    SimplexOva,
    Ova,
    Ovo,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV written by `gen`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "svm")]
    kind: KindArg,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Weights CSV; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    data: PathBuf,
    /// Relative tolerance for the SVM/MNI weight comparison.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Write every (class, sample, value) of the sign condition to this CSV.
    #[arg(long)]
    dump_full: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in sweep: fig3, fig4, fig5 or fig6.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    mu_scale: Option<Vec<f64>>,
    /// One bi-level shape `m,q,r`.
    #[arg(long, value_delimiter = ',')]
    bilevel: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Use 100 trials per point unless --trials is given.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    active_tol: Option<f64>,
    #[arg(long, value_enum)]
    label_scheme: Option<SchemeArg>,
    /// Error-rate constants `c1,c2,c3,c4`.
    #[arg(long, value_delimiter = ',')]
    constants: Option<Vec<f64>>,
    /// Sufficient-condition constants `c1,c2`.
    #[arg(long, value_delimiter = ',')]
    condition: Option<Vec<f64>>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BarplotArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "barplot.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Solver(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidRegime(_) | Error::InvalidInput(_) | Error::DimTooSmall { .. } => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Fit(a) => fit(a),
        Command::Check(a) => check(a),
        Command::Sweep(a) => sweep(a),
        Command::Barplot(a) => barplot(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn exact<const N: usize>(flag: &str, v: &[f64]) -> Result<[f64; N], Failure> {
    <[f64; N]>::try_from(v).map_err(|_| Failure::Config(format!("--{flag} takes {N} values, got {}", v.len())))
}

fn bilevel_params(n: usize, v: &[f64]) -> Result<BilevelParams, Failure> {
    let [m, q, r] = exact("bilevel", v)?;
    Ok(BilevelParams::new(n, m, q, r)?)
}

fn gen(a: GenArgs) -> Result<(), Failure> {
    let need_p = || a.p.ok_or_else(|| Failure::Config("--p is required".into()));
    let data = match a.model {
        ModelArg::Gmm => {
            let p = need_p()?;
            let spec = GmmSpec::orthogonal(a.k, p, a.mu_scale * (p as f64).sqrt())?.with_label_scheme(a.label_scheme.into());
            sample_gmm(&spec, a.n, a.seed)?
        }
        ModelArg::Mlm => {
            let spec = match &a.bilevel {
                Some(v) => MlmSpec::bilevel(&bilevel_params(a.n, v)?, a.k)?,
                None => {
                    let p = need_p()?;
                    MlmSpec::isotropic(a.k, p, a.mu_scale * (p as f64).sqrt())?
                }
            };
            sample_mlm(&spec, a.n, a.seed)?
        }
        ModelArg::Nc => {
            if !a.n.is_multiple_of(a.k) {
                return Err(Failure::Config("nc needs n divisible by k".into()));
            }
            neural_collapse_features(a.k, a.n / a.k, need_p()?, a.mu_scale)?
        }
    };
    match &a.out {
        Some(path) => data.write_csv(BufWriter::new(File::create(path)?))?,
        None => data.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn read_data(path: &Path) -> Result<Dataset, Failure> {
    let file = File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Dataset::read_csv(BufReader::new(file)).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn solver_failure(e: Error) -> Failure {
    match e {
        Error::NotSeparable { .. } | Error::Unconverged { .. } | Error::EmptyPair(..) => Failure::Solver(e.to_string()),
        other => other.into(),
    }
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let data = read_data(&a.data)?;
    let opts = SolverOptions { tol: a.tol, max_iters: a.max_iters, ..SolverOptions::default() };
    let clf: LinearClassifier = match a.kind {
        KindArg::Mni => fit_mni(&data.x, &data.labels),
        KindArg::Svm => fit_multiclass_svm(&data.x, &data.labels, &opts).map(|f| f.classifier),
        KindArg::SimplexOva => fit_simplex_ova_svm(&data.x, &data.labels, &opts),
        KindArg::Ova => fit_ova_svm(&data.x, &data.labels, (1.0, 1.0), &opts),
        KindArg::Ovo => fit_ovo_svm(&data.x, &data.labels, &opts),
    }
    .map_err(solver_failure)?;
    clf.write_weights_csv(BufWriter::new(File::create(&a.out)?))?;
    let sidecar = a.out.with_extension("json");
    std::fs::write(&sidecar, serde_json::to_string_pretty(&clf.sidecar(a.tol, Some(data.seed)))?)?;
    println!("{}", a.out.display());
    Ok(())
}

fn check(a: CheckArgs) -> Result<(), Failure> {
    let data = read_data(&a.data)?;
    let det = check_det_condition(&data.x, &data.labels)?;
    if let Some(path) = &a.dump_full {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "class,sample,value")?;
        for (c, i, v) in det.entries() {
            writeln!(w, "{c},{i},{v:e}")?;
        }
        w.flush()?;
    }
    let mut report = serde_json::json!({
        "det_con": det.verdict,
        "min_value": det.min_value,
        "argmin": { "class": det.argmin.0, "sample": det.argmin.1 },
        "marginal": det.marginal,
    });
    match certify_equivalence(&data.x, &data.labels, a.tol, &SolverOptions::default(), None) {
        Ok(eq) => {
            let interp = interpolation_fraction(eq.svm.classifier.weights(), &data.x, &data.labels, 1e-6)?;
            report["svm_equals_mni"] = eq.svm_equals_mni.into();
            report["decision_agreement"] = eq.decision_agreement.into();
            report["max_weight_gap"] = eq.max_weight_gap.into();
            report["interpolation_fraction"] = interp.fraction.into();
            report["duality_gap"] = eq.svm.classifier.diagnostics.duality_gap.into();
        }
        Err(e) => report["svm_error"] = e.to_string().into(),
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let mut patch = match &a.preset {
        Some(name) => preset(name).map_err(|_| {
            Failure::Config(format!("unknown preset `{name}`; choose one of {}", PRESETS.join(", ")))
        })?,
        None => SweepPatch::default(),
    };
    if let Some(path) = &a.config {
        patch = patch.overlay(SweepPatch::from_json_file(path)?);
    }
    let bilevel = match &a.bilevel {
        Some(v) => {
            let [m, q, r] = exact("bilevel", v)?;
            Some(vec![BilevelShape { m, q, r }])
        }
        None => None,
    };
    let grid = GridPatch { n: a.n, p: a.p, k: a.k, mu_scale: a.mu_scale, bilevel };
    let trials = a.trials.or(a.paper_scale.then_some(PAPER_SCALE_TRIALS));
    patch = patch.overlay(SweepPatch {
        experiment: a.experiment,
        model: a.model.map(Into::into),
        grid: Some(grid),
        trials,
        base_seed: a.base_seed,
        n_test: a.n_test,
        tol: a.tol,
        active_tol: a.active_tol,
        label_scheme: a.label_scheme.map(Into::into),
        constants: a
            .constants
            .map(|c| exact("constants", &c).map(|[c1, c2, c3, c4]| RateConstants { c1, c2, c3, c4 }))
            .transpose()?,
        condition: a
            .condition
            .map(|c| exact("condition", &c).map(|[c1, c2]| ConditionConstants { c1, c2 }))
            .transpose()?,
        output: a.output,
    });
    let config = patch.resolve()?;
    let outcome = run_sweep(&config)?;
    eprintln!(
        "{} trials run, {} resumed, {} with non-ok status",
        outcome.ran, outcome.resumed, outcome.failures
    );
    println!("{}", outcome.output.display());
    Ok(())
}

fn barplot(a: BarplotArgs) -> Result<(), Failure> {
    let bars = repro_barplot(a.seed)?;
    bars.write_csv(BufWriter::new(File::create(&a.out)?))?;
    println!("{}", a.out.display());
    Ok(())
}

fn plot(a: PlotArgs) -> Result<(), Failure> {
    let spec = PlotSpec { x: a.x, y: a.y, group: a.group };
    let path = plot_csv(&a.csv, &spec, a.out.as_deref()).map_err(|e| match e {
        Error::MissingColumn(_) => Failure::Config(e.to_string()),
        other => other.into(),
    })?;
    println!("{}", path.display());
    Ok(())
}

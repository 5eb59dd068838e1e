//! Sweeps, figure data and plots.

mod barplot;
mod config;
mod plot;
mod sweep;

pub use barplot::{repro_barplot, BarRow, Barplot, BAR_K, BAR_MU_SCALE, BAR_N, BAR_P, BAR_PER_CLASS};
pub use config::{
    preset, BilevelShape, ConditionConstants, Grid, GridPatch, GridPoint, ModelFamily, RateConstants, SweepConfig,
    SweepPatch, DEFAULT_CONDITION_C1, DEFAULT_CONDITION_C2, DEFAULT_TRIALS, PAPER_SCALE_TRIALS, PRESETS,
};
pub use plot::{default_svg_path, load_series, plot_csv, render_svg, PlotSpec, Series};
pub use sweep::{
    columns, count_rows, run_sweep, run_sweep_with_threads, run_trial, summarize, summary_path, timings_path,
    trial_seed, Moments, PointSummary, SweepOutcome, SweepSummary, TrialRecord, TrialStatus, THREADS_ENV,
};

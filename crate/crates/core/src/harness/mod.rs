//! Experiment runner: method comparisons, measurement and resolution sweeps,
//! replayed signals, and line profiles.

pub mod config;
pub mod profile;
pub mod runner;
pub mod sweep;
pub mod targets;

pub use config::{ExperimentConfig, MethodConfig, ObjectSource};
pub use profile::{michelson_contrast, profile_line, LineProfile, LineSpec};
pub use runner::{
    load_truth, read_records_csv, run_experiment, run_method, score, simulate, ExperimentRun, Measurement,
    MethodOutput, ResultRecord, RunImage,
};
pub use sweep::{
    desk_measurement_levels, median, run_sweep, summarize, sweep_measurements, sweep_resolution, SummaryRow,
    SweepConfig, SweepRun, SweepSpec,
};
pub use targets::{bars_profile_span, BuiltinTarget, LETTERS};

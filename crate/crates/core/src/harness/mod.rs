//! Seeded experiment runs over n-grids, exponent fits and reports.

pub mod config;
pub mod fit;
pub mod record;
pub mod report;
pub mod run;
pub mod selftest;

pub use config::{ConfigError, ExperimentConfig, Mode};
pub use fit::{
    fit_exponent, target_for, window_slopes, ExponentFit, FitError, Statistic, Target, TargetKind,
    Verdict,
};
pub use record::{read_records, RecordWriter, TrialRecord, CSV_HEADER};
pub use report::write_report;
pub use run::{run_experiment, run_experiment_with, RunError};
pub use selftest::{run_selftest, Check};

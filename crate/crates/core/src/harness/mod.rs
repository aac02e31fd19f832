//! Experiment orchestration: config loading, the canned suites, reports and
//! the calibration self-check.

mod calibrate;
mod config;
mod report;
mod suites;

pub use calibrate::{calibrate_check, CalibrationTable, CheckRow, Golden, CALIBRATED_PROFILES, GOLDEN};
pub use config::{load_config, parse_config, EngineConfig, Format, OutputConfig, SimConfig, WorkloadConfig};
pub use report::{emit_report, Ratio, Report, Row, CSV_COLUMNS};
pub use suites::{run_experiment, run_experiment_traced, run_lsu, size_label, Suite, Traces};

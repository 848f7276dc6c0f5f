//! Scenario configuration, run/sweep/check drivers and output files.

mod check;
mod config;
mod plot;
mod run;
mod sweep;

pub use check::{check_checkpoint, check_config, check_path, CheckItem, CheckReport};
pub use config::{ScenarioConfig, OUTPUT_ROOT_ENV};
pub use plot::plot_data;
pub use run::{
    execute, fit_series, read_series, run, write_series, FitEntry, RunResult, RunSummary, CHECKPOINT_FILE, FITTED,
    FIT_FRACTION, F_MONOTONE_SLACK, SERIES_FILE, SUMMARY_FILE,
};
pub use sweep::{mass_dir_name, normalize_masses, sweep, SweepEntry, SweepReport};

use crate::error::Error;

/// Process exit codes of the command-line tool.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INVARIANT: i32 = 1;
    pub const SOLVER: i32 = 2;
    pub const CONFIG: i32 = 3;
}

/// Exit code for an error that ended a command.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_solver_failure() {
        exit::SOLVER
    } else {
        exit::CONFIG
    }
}

//! The regression tool: config loading, the twelve-test suite, batch runs of
//! both engines with shared seeds, report emission, and automatic alignment
//! analysis of each CA/BCA pair.

mod config;
mod runner;
mod suite;

pub use config::{load_config, parse_config, ConfigLoadError};
pub use runner::{
    list_configs, run_matrix, run_test, MatrixRow, MatrixSummary, Model, RegressError, RunReport,
    RunSpec,
};
pub use suite::{find_test, suite, TestCase};

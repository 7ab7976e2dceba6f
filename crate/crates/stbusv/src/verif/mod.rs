//! The common verification environment: seeded random traffic, passive port
//! monitors, protocol checkers, the data-integrity scoreboard fed by them,
//! and functional coverage. Everything here is a pure function of port
//! traces, so both engines are measured by the very same instruments.

mod checker;
mod coverage;
mod monitor;
mod scoreboard;
mod traffic;

pub use checker::{check_protocol, RuleId, Violation};
pub use coverage::{CoverageModel, CoverageReport};
pub use monitor::{monitor_extract, MonitorTxn, TxnBody, TxnDirection};
pub use scoreboard::{scoreboard_check, ScoreboardVerdict};
pub use traffic::{gen_traffic, routed_dest, AddrRange, TrafficConstraints};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifError {
    #[error("infeasible constraints: {0}")]
    InfeasibleConstraints(String),
    #[error("unknown coverage bin {0}")]
    UnknownBin(String),
}

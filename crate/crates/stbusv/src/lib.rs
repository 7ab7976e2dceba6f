//! A dual-view on-chip bus node simulator and its verification environment.
//!
//! The same node design is implemented twice: a clocked cycle-accurate engine
//! ([`interconnect::ca`]) and an event-driven bus-cycle-accurate engine
//! ([`interconnect::bca`]). Both are driven by the same seeded random traffic
//! and the same harness models, checked by the same protocol checkers and
//! scoreboard, and their port waveforms are compared cycle-by-cycle by the
//! [`analyzer`] after every run.

// Engine code walks parallel per-port state arrays by index throughout.
#![allow(clippy::needless_range_loop)]

pub mod analyzer;
pub mod interconnect;
pub mod protocol;
pub mod regress;
pub mod rng;
pub mod vcdio;
pub mod verif;

//! The node: arbitration, routing and grant/response scheduling, implemented
//! twice. [`ca`] is the clocked cycle-accurate engine, [`bca`] the
//! event-driven bus-cycle-accurate one. Both consume the same stimulus and
//! harness models and must produce identical port waveforms.

pub mod arbiter;
pub mod bca;
pub mod ca;
mod harness;
mod target;

pub use arbiter::{ArbError, ArbPolicy, Arbiter, ArbiterParams, ProgramError};
pub use bca::{bca_run, bca_run_with_fault, PlantedFault};
pub use ca::{ca_run, CaNode, NodeInputs, NodeOutputs};
pub use target::TargetProfile;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Endianness, ProtocolType};
use crate::vcdio::Value;

pub const MAX_PORTS: u32 = 32;
pub const MAX_PIPE: u32 = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Interconnect architecture: one shared bus, a full crossbar, or a partial
/// crossbar with an explicit connectivity matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    SharedBus,
    FullXbar,
    /// `matrix[i][t]` = initiator i may reach target t.
    PartialXbar(Vec<Vec<bool>>),
}

impl Arch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arch::SharedBus => "SHARED_BUS",
            Arch::FullXbar => "FULL_XBAR",
            Arch::PartialXbar(_) => "PARTIAL_XBAR",
        }
    }
}

/// One region of the address map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapRegion {
    pub base: u32,
    pub size: u32,
    pub target: u32,
}

impl MapRegion {
    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.base && (u64::from(addr) < u64::from(self.base) + u64::from(self.size))
    }
}

/// Full parameterization of one node instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub n_init: u32,
    pub n_targ: u32,
    pub width_bits: u32,
    pub protocol: ProtocolType,
    pub pipe_size: u32,
    pub endianness: Endianness,
    pub arch: Arch,
    pub arb_policy: ArbPolicy,
    pub address_map: Vec<MapRegion>,
    pub priority_vector: Vec<u64>,
    pub latency_budget: Vec<u64>,
    /// Per-initiator (grants, window_cycles); `None` entries fall back to the
    /// configured default when the policy is bandwidth limited.
    pub bw_quota: Vec<(u32, u32)>,
    pub target_profiles: Vec<TargetProfile>,
    pub clock_period_ns: u64,
    /// Optional per-config caps applied on top of each test's stop condition.
    pub txn_budget_cap: Option<u64>,
    pub cycle_budget_cap: Option<u64>,
}

impl NodeConfig {
    /// Outstanding-transaction limit actually enforced: 1 under the
    /// handshake protocol, pipe_size otherwise.
    pub fn effective_pipe(&self) -> u32 {
        match self.protocol {
            ProtocolType::T1 => 1,
            _ => self.pipe_size,
        }
    }

    pub fn lanes(&self) -> usize {
        (self.width_bits / 8) as usize
    }

    pub fn reachable(&self, init: usize, targ: usize) -> bool {
        match &self.arch {
            Arch::PartialXbar(m) => m[init][targ],
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_init == 0 || self.n_init > MAX_PORTS {
            return fail(format!("N_INIT must be 1..={MAX_PORTS}, got {}", self.n_init));
        }
        if self.n_targ == 0 || self.n_targ > MAX_PORTS {
            return fail(format!("N_TARG must be 1..={MAX_PORTS}, got {}", self.n_targ));
        }
        if !crate::protocol::WIDTHS.contains(&self.width_bits) {
            return fail(format!(
                "WIDTH must be a power of two in 8..=256 bits, got {}",
                self.width_bits
            ));
        }
        if self.pipe_size == 0 || self.pipe_size > MAX_PIPE {
            return fail(format!("PIPE must be 1..={MAX_PIPE}, got {}", self.pipe_size));
        }
        if self.address_map.is_empty() {
            return fail("address map must contain at least one region".into());
        }
        for region in &self.address_map {
            if region.target >= self.n_targ {
                return fail(format!(
                    "map region {:#010x} names target {} >= N_TARG {}",
                    region.base, region.target, self.n_targ
                ));
            }
            if region.size == 0 {
                return fail(format!("map region {:#010x} has zero size", region.base));
            }
        }
        let mut sorted: Vec<&MapRegion> = self.address_map.iter().collect();
        sorted.sort_by_key(|r| r.base);
        for pair in sorted.windows(2) {
            let end = u64::from(pair[0].base) + u64::from(pair[0].size);
            if end > u64::from(pair[1].base) {
                return fail(format!(
                    "map regions {:#010x} and {:#010x} overlap",
                    pair[0].base, pair[1].base
                ));
            }
        }
        if let Arch::PartialXbar(matrix) = &self.arch {
            if matrix.len() != self.n_init as usize
                || matrix.iter().any(|row| row.len() != self.n_targ as usize)
            {
                return fail("connectivity matrix shape must be n_init x n_targ".into());
            }
            for (i, row) in matrix.iter().enumerate() {
                if !row.iter().any(|&c| c) {
                    return fail(format!("initiator {i} has no reachable target"));
                }
            }
        }
        if self.priority_vector.len() != self.n_init as usize
            || self.latency_budget.len() != self.n_init as usize
            || self.bw_quota.len() != self.n_init as usize
        {
            return fail("per-initiator vectors must have length n_init".into());
        }
        if self.target_profiles.len() != self.n_targ as usize {
            return fail("target profile list must have length n_targ".into());
        }
        for (t, p) in self.target_profiles.iter().enumerate() {
            if p.base_latency == 0 {
                return fail(format!("target {t} base latency must be >= 1"));
            }
        }
        if self.clock_period_ns == 0 {
            return fail("CLOCK_NS must be >= 1".into());
        }
        Ok(())
    }
}

/// Routing result: the mapped target port or the node's bit bucket for
/// unmapped (and, on a partial crossbar, unreachable) addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteResult {
    Target(u32),
    Unmapped,
}

/// The unique map region containing `addr`, or `Unmapped`.
pub fn route(addr: u32, map: &[MapRegion]) -> RouteResult {
    for region in map {
        if region.contains(addr) {
            return RouteResult::Target(region.target);
        }
    }
    RouteResult::Unmapped
}

/// Signal values at one port during one cycle.
///
/// The request channel carries cells from initiators into the node and out to
/// targets; the response channel carries them back. A cell transfers on a
/// cycle iff req and gnt are both high (same for r_req/r_gnt).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortSignals {
    pub req: bool,
    pub gnt: bool,
    pub opc: u8,
    pub addr: u32,
    pub data: [u8; 32],
    pub be: u32,
    pub eop: bool,
    pub lck: bool,
    pub src: u8,
    pub tid: u8,
    pub r_req: bool,
    pub r_gnt: bool,
    pub r_opc: u8,
    pub r_data: [u8; 32],
    pub r_eop: bool,
    pub r_src: u8,
    pub r_tid: u8,
}

pub const R_OPC_OK: u8 = 0b01;
pub const R_OPC_ERR: u8 = 0b10;

impl PortSignals {
    /// Values in the order of [`crate::vcdio::port_signal_layout`].
    pub fn signal_values(&self, width_bits: u32) -> Vec<Value> {
        let lanes = (width_bits / 8) as usize;
        vec![
            Value::from_u64(self.req.into(), 1),
            Value::from_u64(self.gnt.into(), 1),
            Value::from_u64(self.opc.into(), 8),
            Value::from_u64(self.addr.into(), 32),
            Value::from_bytes_le(&self.data[..lanes], width_bits),
            Value::from_u64(self.be.into(), width_bits / 8),
            Value::from_u64(self.eop.into(), 1),
            Value::from_u64(self.lck.into(), 1),
            Value::from_u64(self.src.into(), 5),
            Value::from_u64(self.tid.into(), 8),
            Value::from_u64(self.r_req.into(), 1),
            Value::from_u64(self.r_gnt.into(), 1),
            Value::from_u64(self.r_opc.into(), 2),
            Value::from_bytes_le(&self.r_data[..lanes], width_bits),
            Value::from_u64(self.r_eop.into(), 1),
            Value::from_u64(self.r_src.into(), 5),
            Value::from_u64(self.r_tid.into(), 8),
        ]
    }

    /// Rebuilds a record from sampled signal values (inverse of
    /// `signal_values`); x bits read as 0.
    pub fn from_signal_values(values: &[Value], width_bits: u32) -> PortSignals {
        let lanes = (width_bits / 8) as usize;
        let mut data = [0u8; 32];
        data[..lanes].copy_from_slice(&values[4].to_bytes_le(lanes));
        let mut r_data = [0u8; 32];
        r_data[..lanes].copy_from_slice(&values[13].to_bytes_le(lanes));
        PortSignals {
            req: values[0].to_u64() != 0,
            gnt: values[1].to_u64() != 0,
            opc: values[2].to_u64() as u8,
            addr: values[3].to_u64() as u32,
            data,
            be: values[5].to_u64() as u32,
            eop: values[6].to_u64() != 0,
            lck: values[7].to_u64() != 0,
            src: values[8].to_u64() as u8,
            tid: values[9].to_u64() as u8,
            r_req: values[10].to_u64() != 0,
            r_gnt: values[11].to_u64() != 0,
            r_opc: values[12].to_u64() as u8,
            r_data,
            r_eop: values[14].to_u64() != 0,
            r_src: values[15].to_u64() as u8,
            r_tid: values[16].to_u64() as u8,
        }
    }
}

/// Which side of the node a port sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PortKind {
    Initiator,
    Target,
}

/// Dense per-cycle signal record of one port.
#[derive(Debug, Clone, PartialEq)]
pub struct PortTrace {
    pub name: String,
    pub kind: PortKind,
    pub width_bits: u32,
    pub cycles: Vec<PortSignals>,
}

impl PortTrace {
    pub fn idle(name: String, kind: PortKind, width_bits: u32, len: usize) -> Self {
        Self { name, kind, width_bits, cycles: vec![PortSignals::default(); len] }
    }
}

pub fn init_port_name(i: usize) -> String {
    format!("init{i}")
}

pub fn targ_port_name(t: usize) -> String {
    format!("targ{t}")
}

/// Port kind from the trace naming convention.
pub fn port_kind_from_name(name: &str) -> Option<PortKind> {
    if name.starts_with("init") {
        Some(PortKind::Initiator)
    } else if name.starts_with("targ") {
        Some(PortKind::Target)
    } else {
        None
    }
}

pub use harness::{RunOutcome, Stimulus, TimedRequest};

//! Config file loading: a line-oriented `KEY = VALUE` format describing one
//! node instance.
//!
//! ```text
//! # comment
//! N_INIT = 2
//! N_TARG = 2
//! WIDTH  = 64
//! TYPE   = T3
//! PIPE   = 4
//! ENDIAN = LITTLE
//! ARCH   = FULL_XBAR
//! ARB    = LRU
//! CLOCK_NS = 10
//! MAP = 0x0000:0x1000:0
//! MAP = 0x1000:0x1000:1
//! CONN = 0:1            # PARTIAL_XBAR only, repeated
//! PRIO = 0,1            # per-initiator priority vector
//! LAT = 4,4             # per-initiator latency budgets
//! BW = 2:8              # grants:window for all, or init:grants:window
//! TARGET_LAT = 0:3:1    # target:base:jitter, repeated
//! TXN_BUDGET = 500      # optional per-config cap on test stop conditions
//! CYCLE_BUDGET = 50000
//! ```
//!
//! Defaults: PIPE 4, ENDIAN LITTLE, ARCH FULL_XBAR, ARB FIXED_PRIORITY,
//! CLOCK_NS 10, PRIO/LAT all zero, BW 2:8, TARGET_LAT base 1 jitter 0.

use std::path::Path;

use thiserror::Error;

use crate::interconnect::{Arch, ArbPolicy, MapRegion, NodeConfig, TargetProfile};
use crate::protocol::{Endianness, ProtocolType};

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub fn load_config(path: &Path) -> Result<NodeConfig, ConfigLoadError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<NodeConfig, ConfigLoadError> {
    let mut n_init: Option<u32> = None;
    let mut n_targ: Option<u32> = None;
    let mut width: Option<u32> = None;
    let mut protocol: Option<ProtocolType> = None;
    let mut pipe = 4u32;
    let mut endianness = Endianness::Little;
    let mut arch_kind = "FULL_XBAR".to_string();
    let mut policy = ArbPolicy::FixedPriority;
    let mut clock_ns = 10u64;
    let mut map: Vec<MapRegion> = Vec::new();
    let mut conns: Vec<(u32, u32)> = Vec::new();
    let mut prio: Option<Vec<u64>> = None;
    let mut lat: Option<Vec<u64>> = None;
    let mut bw_all: Option<(u32, u32)> = None;
    let mut bw_each: Vec<(u32, u32, u32)> = Vec::new();
    let mut target_lat: Vec<(u32, u64, u64)> = Vec::new();
    let mut txn_budget: Option<u64> = None;
    let mut cycle_budget: Option<u64> = None;

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let perr = |reason: String| ConfigLoadError::Parse { line, reason };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| perr(format!("expected KEY = VALUE, got {content:?}")))?;
        let key = key.trim().to_uppercase();
        let value = value.trim();
        let int = |v: &str| -> Result<u64, ConfigLoadError> {
            let v = v.trim();
            if let Some(hex) = v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
                u64::from_str_radix(hex, 16).map_err(|_| perr(format!("bad hex number {v:?}")))
            } else {
                v.parse().map_err(|_| perr(format!("bad number {v:?}")))
            }
        };
        let vector = |v: &str| -> Result<Vec<u64>, ConfigLoadError> {
            v.split(',').map(&int).collect()
        };
        match key.as_str() {
            "N_INIT" => n_init = Some(int(value)? as u32),
            "N_TARG" => n_targ = Some(int(value)? as u32),
            "WIDTH" => width = Some(int(value)? as u32),
            "TYPE" => {
                protocol = Some(match value.to_uppercase().as_str() {
                    "T1" => ProtocolType::T1,
                    "T2" => ProtocolType::T2,
                    "T3" => ProtocolType::T3,
                    other => return Err(perr(format!("unknown protocol type {other:?}"))),
                })
            }
            "PIPE" => pipe = int(value)? as u32,
            "ENDIAN" => {
                endianness = match value.to_uppercase().as_str() {
                    "LITTLE" => Endianness::Little,
                    "BIG" => Endianness::Big,
                    other => return Err(perr(format!("unknown endianness {other:?}"))),
                }
            }
            "ARCH" => arch_kind = value.to_uppercase(),
            "ARB" => {
                policy = ArbPolicy::ALL
                    .iter()
                    .copied()
                    .find(|p| p.as_str() == value.to_uppercase())
                    .ok_or_else(|| perr(format!("unknown arbitration policy {value:?}")))?;
            }
            "CLOCK_NS" => clock_ns = int(value)?,
            "MAP" => {
                let parts: Vec<&str> = value.split(':').collect();
                if parts.len() != 3 {
                    return Err(perr("MAP expects base:size:target".into()));
                }
                map.push(MapRegion {
                    base: int(parts[0])? as u32,
                    size: int(parts[1])? as u32,
                    target: int(parts[2])? as u32,
                });
            }
            "CONN" => {
                let parts: Vec<&str> = value.split(':').collect();
                if parts.len() != 2 {
                    return Err(perr("CONN expects init:target".into()));
                }
                conns.push((int(parts[0])? as u32, int(parts[1])? as u32));
            }
            "PRIO" => prio = Some(vector(value)?),
            "LAT" => lat = Some(vector(value)?),
            "BW" => {
                let parts: Vec<&str> = value.split(':').collect();
                match parts.len() {
                    2 => bw_all = Some((int(parts[0])? as u32, int(parts[1])? as u32)),
                    3 => bw_each.push((
                        int(parts[0])? as u32,
                        int(parts[1])? as u32,
                        int(parts[2])? as u32,
                    )),
                    _ => return Err(perr("BW expects grants:window or init:grants:window".into())),
                }
            }
            "TARGET_LAT" => {
                let parts: Vec<&str> = value.split(':').collect();
                if parts.len() != 3 {
                    return Err(perr("TARGET_LAT expects target:base:jitter".into()));
                }
                target_lat.push((int(parts[0])? as u32, int(parts[1])?, int(parts[2])?));
            }
            "TXN_BUDGET" => txn_budget = Some(int(value)?),
            "CYCLE_BUDGET" => cycle_budget = Some(int(value)?),
            other => return Err(perr(format!("unknown key {other:?}"))),
        }
    }

    let invalid = |msg: String| ConfigLoadError::Invalid(msg);
    let n_init = n_init.ok_or_else(|| invalid("N_INIT is required".into()))?;
    let n_targ = n_targ.ok_or_else(|| invalid("N_TARG is required".into()))?;
    let width = width.ok_or_else(|| invalid("WIDTH is required".into()))?;
    let protocol = protocol.ok_or_else(|| invalid("TYPE is required".into()))?;

    let arch = match arch_kind.as_str() {
        "SHARED_BUS" => Arch::SharedBus,
        "FULL_XBAR" => Arch::FullXbar,
        "PARTIAL_XBAR" => {
            let mut matrix = vec![vec![false; n_targ as usize]; n_init as usize];
            for (i, t) in &conns {
                if *i >= n_init || *t >= n_targ {
                    return Err(invalid(format!("CONN {i}:{t} out of range")));
                }
                matrix[*i as usize][*t as usize] = true;
            }
            Arch::PartialXbar(matrix)
        }
        other => return Err(invalid(format!("unknown architecture {other:?}"))),
    };
    if !matches!(arch, Arch::PartialXbar(_)) && !conns.is_empty() {
        return Err(invalid("CONN is only meaningful with ARCH = PARTIAL_XBAR".into()));
    }

    let fit = |v: Option<Vec<u64>>, name: &str| -> Result<Vec<u64>, ConfigLoadError> {
        match v {
            None => Ok(vec![0; n_init as usize]),
            Some(v) if v.len() == n_init as usize => Ok(v),
            Some(v) => Err(invalid(format!(
                "{name} vector has {} entries, expected {}",
                v.len(),
                n_init
            ))),
        }
    };
    let priority_vector = fit(prio, "PRIO")?;
    let latency_budget = fit(lat, "LAT")?;

    let mut bw_quota = vec![bw_all.unwrap_or((2, 8)); n_init as usize];
    for (i, grants, window) in bw_each {
        if i >= n_init {
            return Err(invalid(format!("BW initiator {i} out of range")));
        }
        bw_quota[i as usize] = (grants, window);
    }
    if policy == ArbPolicy::BandwidthLimited {
        for (i, &(grants, window)) in bw_quota.iter().enumerate() {
            if grants == 0 || window == 0 {
                return Err(invalid(format!(
                    "BW quota for initiator {i} must have grants >= 1 and window >= 1"
                )));
            }
        }
    }

    let mut target_profiles = vec![TargetProfile::default(); n_targ as usize];
    for (t, base, jitter) in target_lat {
        if t >= n_targ {
            return Err(invalid(format!("TARGET_LAT target {t} out of range")));
        }
        target_profiles[t as usize] = TargetProfile { base_latency: base, jitter };
    }

    let config = NodeConfig {
        n_init,
        n_targ,
        width_bits: width,
        protocol,
        pipe_size: pipe,
        endianness,
        arch,
        arb_policy: policy,
        address_map: map,
        priority_vector,
        latency_budget,
        bw_quota,
        target_profiles,
        clock_period_ns: clock_ns,
        txn_budget_cap: txn_budget,
        cycle_budget_cap: cycle_budget,
    };
    config.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(config)
}

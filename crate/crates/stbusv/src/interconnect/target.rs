//! Target-side harness model: a byte-addressable memory behind an in-order
//! server with configurable response latency.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::protocol::{OpKind, Request, RspStatus};
use crate::rng::SplitMix64;

/// Response latency specification of one target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetProfile {
    /// Cycles from accepting a request packet to presenting its response.
    pub base_latency: u64,
    /// Upper bound on deterministic pseudo-random extra cycles per response.
    pub jitter: u64,
}

impl Default for TargetProfile {
    fn default() -> Self {
        Self { base_latency: 1, jitter: 0 }
    }
}

/// One target: zero-filled sparse memory plus the in-order latency server.
/// LOAD returns current content, STORE writes, SWAP returns old content then
/// writes. Identical seeds give identical jitter sequences.
#[derive(Debug, Clone)]
pub struct TargetServer {
    profile: TargetProfile,
    memory: HashMap<u32, u8>,
    jitter_rng: SplitMix64,
    finish_cycle: u64,
}

impl TargetServer {
    /// `stream_seed` is the run seed XOR the target's global port index.
    pub fn new(profile: TargetProfile, stream_seed: u64) -> Self {
        Self {
            profile,
            memory: HashMap::new(),
            jitter_rng: SplitMix64::new(stream_seed),
            finish_cycle: 0,
        }
    }

    fn read(&self, addr: u32, len: usize) -> Vec<u8> {
        (0..len)
            .map(|k| *self.memory.get(&(addr.wrapping_add(k as u32))).unwrap_or(&0))
            .collect()
    }

    fn write(&mut self, addr: u32, data: &[u8]) {
        for (k, &b) in data.iter().enumerate() {
            self.memory.insert(addr.wrapping_add(k as u32), b);
        }
    }

    /// Executes one request packet whose last cell arrived at `arrival`.
    /// Returns the cycle the response packet becomes ready and its payload.
    pub fn execute(&mut self, arrival: u64, req: &Request) -> (u64, RspStatus, Vec<u8>) {
        let size = req.opcode.size_bytes as usize;
        let payload = match req.opcode.kind {
            OpKind::Load => self.read(req.addr, size),
            OpKind::Store => {
                self.write(req.addr, &req.data);
                Vec::new()
            }
            OpKind::Swap => {
                let old = self.read(req.addr, size);
                self.write(req.addr, &req.data);
                old
            }
        };
        let jitter = if self.profile.jitter == 0 {
            0
        } else {
            self.jitter_rng.next_below(self.profile.jitter + 1)
        };
        let start = arrival.max(self.finish_cycle);
        self.finish_cycle = start + self.profile.base_latency + jitter;
        (self.finish_cycle, RspStatus::Ok, payload)
    }
}

//! Functional coverage: a fixed bin set derived from the node configuration,
//! sampled from monitor transactions. Bins a configuration cannot hit are
//! excluded from the model so full coverage stays reachable.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::interconnect::{Arch, NodeConfig, PortKind};
use crate::protocol::{legal_kinds, legal_sizes, ProtocolType, RspStatus};

use super::monitor::{MonitorTxn, TxnBody, TxnDirection};
use super::traffic::routed_dest;
use super::VerifError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub percent: f64,
    pub total_bins: usize,
    pub hit_bins: usize,
    pub holes: Vec<String>,
}

/// Bin table with hit counts. Bin ids:
/// `op_size/<KIND>/<SIZE>`, `op_target/<KIND>/<T>`, `winner/<I>`,
/// `feature/{chunk,out_of_order,err_response,back_to_back,pipe_full}`,
/// `conv/{below_width,above_width}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageModel {
    bins: BTreeMap<String, u64>,
}

impl CoverageModel {
    pub fn new(config: &NodeConfig) -> Self {
        let mut bins = BTreeMap::new();
        let lanes = config.width_bits / 8;

        for &kind in legal_kinds(config.protocol) {
            for size in legal_sizes(config.protocol, config.width_bits, kind) {
                bins.insert(format!("op_size/{}/{}", kind.as_str(), size), 0);
            }
        }
        let mapped_targets: Vec<u32> = {
            let mut t: Vec<u32> = config.address_map.iter().map(|r| r.target).collect();
            t.sort_unstable();
            t.dedup();
            t
        };
        for &t in &mapped_targets {
            let reachable = (0..config.n_init as usize).any(|i| config.reachable(i, t as usize));
            if !reachable {
                continue;
            }
            for &kind in legal_kinds(config.protocol) {
                bins.insert(format!("op_target/{}/{}", kind.as_str(), t), 0);
            }
        }
        for i in 0..config.n_init {
            bins.insert(format!("winner/{i}"), 0);
        }

        if config.protocol != ProtocolType::T1 {
            bins.insert("feature/chunk".into(), 0);
        }
        let multi_target_initiator = (0..config.n_init as usize).any(|i| {
            mapped_targets
                .iter()
                .filter(|&&t| config.reachable(i, t as usize))
                .count()
                >= 2
        });
        if config.protocol == ProtocolType::T3 && config.pipe_size >= 2 && multi_target_initiator {
            bins.insert("feature/out_of_order".into(), 0);
        }
        let mapped_bytes: u64 = config.address_map.iter().map(|r| u64::from(r.size)).sum();
        let has_unmapped = mapped_bytes < 1 << 32;
        let has_unreachable = matches!(&config.arch, Arch::PartialXbar(m)
            if m.iter().any(|row| row.iter().any(|&c| !c)));
        if has_unmapped || has_unreachable {
            bins.insert("feature/err_response".into(), 0);
        }
        let shared_target = mapped_targets.iter().any(|&t| {
            (0..config.n_init as usize)
                .filter(|&i| config.reachable(i, t as usize))
                .count()
                >= 2
        });
        if shared_target {
            bins.insert("feature/back_to_back".into(), 0);
        }
        bins.insert("feature/pipe_full".into(), 0);

        if lanes > 1 {
            bins.insert("conv/below_width".into(), 0);
        }
        if config.protocol != ProtocolType::T1 {
            bins.insert("conv/above_width".into(), 0);
        }
        Self { bins }
    }

    pub fn hit(&mut self, bin: &str) -> Result<(), VerifError> {
        match self.bins.get_mut(bin) {
            Some(count) => {
                *count += 1;
                Ok(())
            }
            None => Err(VerifError::UnknownBin(bin.to_string())),
        }
    }

    /// Hit a bin that may be excluded for this config; ignored when absent.
    fn hit_if_present(&mut self, bin: &str) {
        if let Some(count) = self.bins.get_mut(bin) {
            *count += 1;
        }
    }

    /// Samples every bin family from one run's monitor transactions.
    pub fn sample_run(&mut self, config: &NodeConfig, txns: &[MonitorTxn]) {
        let lanes = config.width_bits / 8;
        let effective_pipe = config.effective_pipe() as i64;

        // Per initiator port: issue order for out-of-order detection and
        // (cycle, delta) events for the pipe-full bin.
        let mut issue_order: BTreeMap<u8, Vec<u8>> = BTreeMap::new();
        let mut events: BTreeMap<u8, Vec<(u64, i64)>> = BTreeMap::new();
        // Per target port: packet spans for back-to-back detection.
        let mut spans: BTreeMap<&str, Vec<(u64, u64)>> = BTreeMap::new();

        for txn in txns.iter().filter(|t| t.complete) {
            match (&txn.kind, &txn.direction, &txn.body) {
                (PortKind::Initiator, TxnDirection::Req, TxnBody::Req(req)) => {
                    self.hit_if_present(&format!(
                        "op_size/{}/{}",
                        req.opcode.kind.as_str(),
                        req.opcode.size_bytes
                    ));
                    if let Some(t) = routed_dest(config, req) {
                        self.hit_if_present(&format!(
                            "op_target/{}/{}",
                            req.opcode.kind.as_str(),
                            t
                        ));
                    }
                    self.hit_if_present(&format!("winner/{}", req.src));
                    if txn.locked {
                        self.hit_if_present("feature/chunk");
                    }
                    if req.opcode.size_bytes < lanes {
                        self.hit_if_present("conv/below_width");
                    }
                    if req.opcode.size_bytes > lanes {
                        self.hit_if_present("conv/above_width");
                    }
                    issue_order.entry(req.src).or_default().push(req.tid);
                    events.entry(req.src).or_default().push((txn.start_cycle, 1));
                }
                (PortKind::Initiator, TxnDirection::Rsp, TxnBody::Rsp(rsp)) => {
                    if rsp.status == RspStatus::Err {
                        self.hit_if_present("feature/err_response");
                    }
                    events.entry(rsp.src).or_default().push((txn.end_cycle, -1));
                }
                (PortKind::Target, TxnDirection::Req, _) => {
                    spans
                        .entry(txn.port.as_str())
                        .or_default()
                        .push((txn.start_cycle, txn.end_cycle));
                }
                _ => {}
            }
        }

        // Out-of-order: a response completing while an earlier request of
        // the same source is still unanswered.
        let mut pending = issue_order.clone();
        let mut rsp_sorted: Vec<&MonitorTxn> = txns
            .iter()
            .filter(|t| {
                t.complete && t.kind == PortKind::Initiator && t.direction == TxnDirection::Rsp
            })
            .collect();
        rsp_sorted.sort_by_key(|t| t.end_cycle);
        for txn in rsp_sorted {
            let (src, tid) = txn.src_tid();
            if let Some(queue) = pending.get_mut(&src) {
                if let Some(pos) = queue.iter().position(|&t| t == tid) {
                    if pos != 0 {
                        self.hit_if_present("feature/out_of_order");
                    }
                    queue.remove(pos);
                }
            }
        }

        // Back-to-back: a packet starting the cycle right after another
        // packet ended at the same target port.
        for (_port, mut list) in spans {
            list.sort_unstable();
            for pair in list.windows(2) {
                if pair[1].0 == pair[0].1 + 1 {
                    self.hit_if_present("feature/back_to_back");
                }
            }
        }

        // Pipe full: outstanding per initiator reaching the effective bound.
        for (_src, mut list) in events {
            // Retire responses before new issues on the same cycle.
            list.sort_unstable();
            let mut outstanding = 0i64;
            for (_, delta) in list {
                outstanding += delta;
                if outstanding >= effective_pipe {
                    self.hit_if_present("feature/pipe_full");
                }
            }
        }
    }

    pub fn merge(&mut self, other: &CoverageModel) {
        for (bin, count) in &other.bins {
            if let Some(mine) = self.bins.get_mut(bin) {
                *mine += count;
            }
        }
    }

    pub fn hits(&self) -> &BTreeMap<String, u64> {
        &self.bins
    }

    pub fn report(&self) -> CoverageReport {
        let total = self.bins.len();
        let hit = self.bins.values().filter(|&&c| c > 0).count();
        let holes: Vec<String> =
            self.bins.iter().filter(|(_, &c)| c == 0).map(|(b, _)| b.clone()).collect();
        CoverageReport {
            percent: if total == 0 { 100.0 } else { 100.0 * hit as f64 / total as f64 },
            total_bins: total,
            hit_bins: hit,
            holes,
        }
    }
}

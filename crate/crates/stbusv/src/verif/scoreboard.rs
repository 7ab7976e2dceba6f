//! End-to-end data-integrity scoreboard: pairs initiator-side and
//! target-side transactions, replays the target memory model, and verifies
//! every response payload.

use std::collections::HashMap;

use serde::Serialize;

use crate::interconnect::{NodeConfig, PortKind};
use crate::protocol::{OpKind, Request, RspStatus};

use super::monitor::{MonitorTxn, TxnBody, TxnDirection};
use super::traffic::routed_dest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ScoreboardVerdict {
    Pass,
    Fail(Vec<String>),
}

impl ScoreboardVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ScoreboardVerdict::Pass)
    }
}

/// Reference memory replay, independent of the engine target model.
#[derive(Default)]
struct RefMemory {
    bytes: HashMap<u32, u8>,
}

impl RefMemory {
    fn apply(&mut self, req: &Request) -> Vec<u8> {
        let size = req.opcode.size_bytes as usize;
        let read = |mem: &HashMap<u32, u8>| {
            (0..size)
                .map(|k| *mem.get(&req.addr.wrapping_add(k as u32)).unwrap_or(&0))
                .collect::<Vec<u8>>()
        };
        match req.opcode.kind {
            OpKind::Load => read(&self.bytes),
            OpKind::Store => {
                for (k, &b) in req.data.iter().enumerate() {
                    self.bytes.insert(req.addr.wrapping_add(k as u32), b);
                }
                Vec::new()
            }
            OpKind::Swap => {
                let old = read(&self.bytes);
                for (k, &b) in req.data.iter().enumerate() {
                    self.bytes.insert(req.addr.wrapping_add(k as u32), b);
                }
                old
            }
        }
    }
}

/// Checks conservation and data integrity over the monitors of one run.
///
/// PASS iff every mapped-and-reachable initiator request appears exactly
/// once at its routed target with identical content, every unroutable
/// request earns a node ERR response, every response matches the memory
/// model replay, and nothing is left unpaired.
pub fn scoreboard_check(txns: &[MonitorTxn], config: &NodeConfig) -> ScoreboardVerdict {
    let mut fails: Vec<String> = Vec::new();
    let mut fail = |msg: String| fails.push(msg);

    let complete = |t: &&MonitorTxn| t.complete;
    let init_reqs: Vec<&MonitorTxn> = txns
        .iter()
        .filter(|t| t.kind == PortKind::Initiator && t.direction == TxnDirection::Req)
        .filter(complete)
        .collect();
    let init_rsps: Vec<&MonitorTxn> = txns
        .iter()
        .filter(|t| t.kind == PortKind::Initiator && t.direction == TxnDirection::Rsp)
        .filter(complete)
        .collect();
    let targ_reqs: Vec<&MonitorTxn> = txns
        .iter()
        .filter(|t| t.kind == PortKind::Target && t.direction == TxnDirection::Req)
        .filter(complete)
        .collect();
    let targ_rsps: Vec<&MonitorTxn> = txns
        .iter()
        .filter(|t| t.kind == PortKind::Target && t.direction == TxnDirection::Rsp)
        .filter(complete)
        .collect();

    // Replay target-side requests per target port in arrival order to get
    // expected response payloads, queued per (src, tid) in execution order.
    let mut memories: HashMap<String, RefMemory> = HashMap::new();
    let mut expected_rsp: HashMap<(u8, u8), Vec<Vec<u8>>> = HashMap::new();
    let mut targ_sorted = targ_reqs.clone();
    targ_sorted.sort_by_key(|t| (t.end_cycle, t.port.clone()));
    for txn in &targ_sorted {
        let TxnBody::Req(req) = &txn.body else { continue };
        let mem = memories.entry(txn.port.clone()).or_default();
        let payload = mem.apply(req);
        expected_rsp.entry((req.src, req.tid)).or_default().push(payload);
    }

    // Pair initiator requests with target arrivals.
    let mut targ_pool: HashMap<(u8, u8), Vec<&MonitorTxn>> = HashMap::new();
    for txn in &targ_reqs {
        targ_pool.entry(txn.src_tid()).or_default().push(txn);
    }
    let mut err_expected: HashMap<(u8, u8), u32> = HashMap::new();
    for txn in &init_reqs {
        let TxnBody::Req(req) = &txn.body else { continue };
        let key = (req.src, req.tid);
        match routed_dest(config, req) {
            Some(t) => {
                let port = crate::interconnect::targ_port_name(t);
                let pool = targ_pool.entry(key).or_default();
                match pool.iter().position(|cand| cand.port == port) {
                    Some(pos) => {
                        let cand = pool.remove(pos);
                        let TxnBody::Req(got) = &cand.body else { unreachable!() };
                        if got.opcode != req.opcode || got.addr != req.addr || got.data != req.data
                        {
                            fail(format!(
                                "txn (src {}, tid {}) mutated in flight: \
                                 sent {:?}@{:#x} {:02x?}, target saw {:?}@{:#x} {:02x?}",
                                req.src,
                                req.tid,
                                req.opcode,
                                req.addr,
                                req.data,
                                got.opcode,
                                got.addr,
                                got.data
                            ));
                        }
                    }
                    None => fail(format!(
                        "request (src {}, tid {}) to target {} never arrived",
                        req.src, req.tid, t
                    )),
                }
            }
            None => {
                *err_expected.entry(key).or_default() += 1;
            }
        }
    }
    for (key, leftovers) in &targ_pool {
        for txn in leftovers {
            fail(format!(
                "target port {} saw a request (src {}, tid {}) no initiator issued",
                txn.port, key.0, key.1
            ));
        }
    }

    // Responses at initiator ports: ERR for unroutable requests, replayed
    // payload for the rest.
    let mut rsp_seen: HashMap<(u8, u8), u32> = HashMap::new();
    for txn in &init_rsps {
        let TxnBody::Rsp(rsp) = &txn.body else { continue };
        let key = (rsp.src, rsp.tid);
        *rsp_seen.entry(key).or_default() += 1;
        match rsp.status {
            RspStatus::Err => {
                match err_expected.get_mut(&key) {
                    Some(n) if *n > 0 => *n -= 1,
                    _ => fail(format!(
                        "unexpected ERR response (src {}, tid {})",
                        rsp.src, rsp.tid
                    )),
                }
                if !rsp.data.is_empty() {
                    fail(format!("ERR response (src {}, tid {}) carries data", rsp.src, rsp.tid));
                }
            }
            RspStatus::Ok => match expected_rsp.get_mut(&key) {
                Some(queue) if !queue.is_empty() => {
                    let want = queue.remove(0);
                    if rsp.data != want {
                        fail(format!(
                            "response (src {}, tid {}) data {:02x?} != expected {:02x?}",
                            rsp.src, rsp.tid, rsp.data, want
                        ));
                    }
                }
                _ => fail(format!(
                    "OK response (src {}, tid {}) has no matching target-side execution",
                    rsp.src, rsp.tid
                )),
            },
        }
    }
    for (key, n) in &err_expected {
        if *n > 0 {
            fail(format!(
                "unroutable request (src {}, tid {}) never received its ERR response",
                key.0, key.1
            ));
        }
    }

    // Conservation: response count equals request count at initiator ports,
    // and target-side responses pair with target-side requests.
    if init_reqs.len() != init_rsps.len() {
        fail(format!(
            "initiator ports saw {} requests but {} responses",
            init_reqs.len(),
            init_rsps.len()
        ));
    }
    let mut targ_rsp_count: HashMap<(u8, u8), i64> = HashMap::new();
    for txn in &targ_rsps {
        *targ_rsp_count.entry(txn.src_tid()).or_default() += 1;
    }
    for txn in &targ_reqs {
        *targ_rsp_count.entry(txn.src_tid()).or_default() -= 1;
    }
    for (key, n) in targ_rsp_count {
        if n != 0 {
            fail(format!(
                "target-side request/response mismatch for (src {}, tid {}): {:+}",
                key.0, key.1, n
            ));
        }
    }

    if fails.is_empty() {
        ScoreboardVerdict::Pass
    } else {
        fails.sort();
        ScoreboardVerdict::Fail(fails)
    }
}

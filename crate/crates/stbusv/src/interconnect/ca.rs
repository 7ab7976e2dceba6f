//! The clocked cycle-accurate engine. [`CaNode`] is a step function in the
//! register-transfer mold: it samples the port-driven signals of one cycle,
//! emits the node-driven signals of that cycle, and latches the grants for
//! the next one. [`ca_run`] wraps it with the harness (stimulus cursors and
//! target servers) and records dense port traces.
//!
//! Scheduling semantics shared with the event-driven engine:
//! - grants are registered: a decision at the end of cycle c transfers at c+1;
//! - arbitration is per packet; cells of a granted packet stream
//!   back-to-back and a resource re-arbitrates on the cycle its packet ends;
//! - after an eop transfer the same port contends again no earlier than the
//!   next cycle (its new face must be observed requesting first);
//! - granted request cells surface at the routed target port pipe_size
//!   cycles later; response cells mirror this back;
//! - unmapped or unreachable packets are consumed by the node and answered
//!   with a single ERR cell that becomes ready pipe_size cycles after the
//!   packet's eop and contends on the response path as a virtual source.

use std::collections::VecDeque;

use crate::protocol::{build_response_cells, Cell, OpKind, ProtocolType, Request, RspStatus};
use crate::rng::port_stream_seed;

use super::harness::{
    compile_programs, finalize_traces, write_req_half, write_rsp_half, ReqPortCursor, RspPacket,
    RspPortCursor, RunOutcome, Stimulus,
};
use super::target::TargetServer;
use super::{
    init_port_name, route, targ_port_name, Arbiter, ArbiterParams, NodeConfig, PortKind,
    PortSignals, PortTrace, ProgramError, RouteResult,
};

/// Port-driven signals sampled by the node in one cycle.
#[derive(Debug, Clone)]
pub struct NodeInputs {
    /// Request-channel face presented by each initiator port.
    pub init_req: Vec<Option<Cell>>,
    /// Response-channel face presented by each target port.
    pub targ_rsp: Vec<Option<(Cell, RspStatus)>>,
}

/// Node-driven signals of the same cycle.
#[derive(Debug, Clone)]
pub struct NodeOutputs {
    pub init_gnt: Vec<bool>,
    /// Request cells surfacing at target ports (accepted the same cycle).
    pub targ_req: Vec<Option<Cell>>,
    /// Response cells delivered at initiator ports (accepted the same cycle).
    pub init_rsp: Vec<Option<(Cell, RspStatus)>>,
    pub targ_rgnt: Vec<bool>,
}

/// Identifies a response-path source in an arbiter domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RspSource {
    Target(usize),
    ErrorQueue(usize),
}

pub struct CaNode {
    cfg: NodeConfig,
    cycle: u64,
    // Request path.
    req_arbs: Vec<Arbiter>,
    req_grant: Vec<Option<usize>>,
    req_busy: Vec<Option<usize>>,
    /// Chunk owner per target plus the bucket (index n_targ).
    chunk_owner: Vec<Option<usize>>,
    head_start: Vec<Option<u64>>,
    in_packet: Vec<bool>,
    /// Outstanding (tid, dest target-or-bucket) per initiator.
    outstanding: Vec<Vec<(u8, usize)>>,
    pipe: VecDeque<(u64, usize, Cell)>,
    // Response path.
    rsp_arbs: Vec<Arbiter>,
    rsp_grant: Vec<Option<usize>>,
    rsp_busy: Vec<Option<usize>>,
    rsp_head_start: Vec<Option<u64>>,
    /// Pending node-generated ERR cells per initiator: (ready cycle, cell).
    err_q: Vec<VecDeque<(u64, Cell)>>,
    err_visible: Vec<Option<u64>>,
    err_done: Vec<Option<u64>>,
    rsp_pipe: VecDeque<(u64, usize, Cell, RspStatus)>,
}

impl CaNode {
    pub fn new(cfg: &NodeConfig) -> Self {
        let n_init = cfg.n_init as usize;
        let n_targ = cfg.n_targ as usize;
        let shared = matches!(cfg.arch, super::Arch::SharedBus);
        let n_req_res = if shared { 1 } else { n_targ + 1 };
        let n_rsp_res = if shared { 1 } else { n_init };
        let req_params = ArbiterParams {
            priority: cfg.priority_vector.clone(),
            latency_budget: cfg.latency_budget.clone(),
            bw_quota: (cfg.arb_policy == super::ArbPolicy::BandwidthLimited)
                .then(|| cfg.bw_quota.clone()),
        };
        let rsp_domain = if shared { n_targ + n_init } else { n_targ + 1 };
        Self {
            cycle: 0,
            req_arbs: (0..n_req_res)
                .map(|_| Arbiter::new(cfg.arb_policy, n_init, req_params.clone()))
                .collect(),
            req_grant: vec![None; n_req_res],
            req_busy: vec![None; n_req_res],
            chunk_owner: vec![None; n_targ + 1],
            head_start: vec![None; n_init],
            in_packet: vec![false; n_init],
            outstanding: vec![Vec::new(); n_init],
            pipe: VecDeque::new(),
            rsp_arbs: (0..n_rsp_res)
                .map(|_| Arbiter::new(cfg.arb_policy, rsp_domain, ArbiterParams::neutral(rsp_domain)))
                .collect(),
            rsp_grant: vec![None; n_rsp_res],
            rsp_busy: vec![None; n_rsp_res],
            rsp_head_start: vec![None; n_targ],
            err_q: vec![VecDeque::new(); n_init],
            err_visible: vec![None; n_init],
            err_done: vec![None; n_init],
            rsp_pipe: VecDeque::new(),
            cfg: cfg.clone(),
        }
    }

    fn shared(&self) -> bool {
        matches!(self.cfg.arch, super::Arch::SharedBus)
    }

    fn n_init(&self) -> usize {
        self.cfg.n_init as usize
    }

    fn n_targ(&self) -> usize {
        self.cfg.n_targ as usize
    }

    /// Target-or-bucket index a face cell heads to from initiator `i`.
    fn dest_of(&self, i: usize, cell: &Cell) -> usize {
        match route(cell.meta.addr, &self.cfg.address_map) {
            RouteResult::Target(t) if self.cfg.reachable(i, t as usize) => t as usize,
            _ => self.n_targ(),
        }
    }

    fn req_resource(&self, dest: usize) -> usize {
        if self.shared() {
            0
        } else {
            dest
        }
    }

    fn rsp_resource(&self, dest_init: usize) -> usize {
        if self.shared() {
            0
        } else {
            dest_init
        }
    }

    /// Requester-domain index of a response source within its resource.
    fn rsp_domain_index(&self, source: RspSource) -> usize {
        match source {
            RspSource::Target(t) => t,
            RspSource::ErrorQueue(i) => {
                if self.shared() {
                    self.n_targ() + i
                } else {
                    self.n_targ()
                }
            }
        }
    }

    /// Installs a new priority vector on every request-path arbiter; takes
    /// effect with the decisions of the current cycle, i.e. the next grant.
    pub fn program_priority(&mut self, vector: &[u64]) -> Result<(), ProgramError> {
        if vector.len() != self.n_init() {
            return Err(ProgramError::LengthMismatch { want: self.n_init(), got: vector.len() });
        }
        for arb in &mut self.req_arbs {
            arb.program_priority(vector)?;
        }
        Ok(())
    }

    pub fn enqueue_error(&mut self, meta: crate::protocol::CellMeta, ready: u64) {
        let i = meta.src as usize;
        let cell = Cell {
            payload: vec![0u8; self.cfg.lanes()],
            byte_enables: 0,
            eop: true,
            lck: false,
            meta,
        };
        self.err_q[i].push_back((ready, cell));
        if self.err_visible[i].is_none() {
            let after = self.err_done[i].map_or(0, |d| d + 1);
            self.err_visible[i] = Some(ready.max(after));
        }
    }

    pub fn is_quiescent(&self) -> bool {
        self.pipe.is_empty()
            && self.rsp_pipe.is_empty()
            && self.err_q.iter().all(VecDeque::is_empty)
            && self.outstanding.iter().all(Vec::is_empty)
            && self.req_grant.iter().all(Option::is_none)
            && self.rsp_grant.iter().all(Option::is_none)
    }

    /// Advances one clock: emits this cycle's node-driven signals, applies
    /// transfer effects, and latches the grant decisions for the next cycle.
    pub fn step(&mut self, inputs: &NodeInputs) -> NodeOutputs {
        let cycle = self.cycle;
        let n_init = self.n_init();
        let n_targ = self.n_targ();
        let bucket = n_targ;

        // Registered grant outputs of this cycle.
        let mut init_gnt = vec![false; n_init];
        for winner in self.req_grant.iter().flatten() {
            init_gnt[*winner] = true;
        }
        let mut targ_rgnt = vec![false; n_targ];
        let mut err_grant = vec![false; n_init];
        for (r, g) in self.rsp_grant.iter().enumerate() {
            if let Some(idx) = g {
                match self.domain_source(r, *idx) {
                    RspSource::Target(t) => targ_rgnt[t] = true,
                    RspSource::ErrorQueue(i) => err_grant[i] = true,
                }
            }
        }

        // Pipe exits surface at the always-ready far ports this cycle.
        let mut targ_req: Vec<Option<Cell>> = vec![None; n_targ];
        while self.pipe.front().is_some_and(|(exit, _, _)| *exit == cycle) {
            let (_, t, cell) = self.pipe.pop_front().expect("checked front");
            debug_assert!(targ_req[t].is_none(), "one arrival per target per cycle");
            targ_req[t] = Some(cell);
        }
        let mut init_rsp: Vec<Option<(Cell, RspStatus)>> = vec![None; n_init];
        while self.rsp_pipe.front().is_some_and(|(exit, _, _, _)| *exit == cycle) {
            let (_, i, cell, status) = self.rsp_pipe.pop_front().expect("checked front");
            debug_assert!(init_rsp[i].is_none(), "one delivery per initiator per cycle");
            init_rsp[i] = Some((cell, status));
        }

        // Track request ages from the sampled req lines.
        for i in 0..n_init {
            match (&inputs.init_req[i], self.head_start[i]) {
                (Some(_), None) => self.head_start[i] = Some(cycle),
                (None, Some(_)) => self.head_start[i] = None,
                _ => {}
            }
        }
        for t in 0..n_targ {
            match (&inputs.targ_rsp[t], self.rsp_head_start[t]) {
                (Some(_), None) => self.rsp_head_start[t] = Some(cycle),
                (None, Some(_)) => self.rsp_head_start[t] = None,
                _ => {}
            }
        }

        // Request-channel transfers at initiator ports.
        let mut transferred_req = vec![false; n_init];
        for i in 0..n_init {
            if !init_gnt[i] {
                continue;
            }
            let cell = inputs.init_req[i]
                .as_ref()
                .expect("grant without request violates the presentation contract");
            transferred_req[i] = true;
            let dest = self.dest_of(i, cell);
            let res = self.req_resource(dest);
            if !self.in_packet[i] {
                self.outstanding[i].push((cell.meta.tid, dest));
            }
            self.in_packet[i] = !cell.eop;
            if cell.lck {
                self.chunk_owner[dest] = Some(i);
            } else if cell.eop && self.chunk_owner[dest] == Some(i) {
                self.chunk_owner[dest] = None;
            }
            self.req_busy[res] = (!cell.eop).then_some(i);
            if cell.eop {
                self.head_start[i] = None;
            }
            if dest == bucket {
                if cell.eop {
                    self.enqueue_error(cell.meta, cycle + u64::from(self.cfg.pipe_size));
                }
            } else {
                self.pipe.push_back((cycle + u64::from(self.cfg.pipe_size), dest, cell.clone()));
            }
        }

        // Response-channel transfers at target ports and error sources.
        let mut transferred_rsp = vec![false; n_targ];
        for t in 0..n_targ {
            if !targ_rgnt[t] {
                continue;
            }
            let (cell, status) = inputs.targ_rsp[t]
                .as_ref()
                .expect("response grant without a presented cell");
            transferred_rsp[t] = true;
            let dest = cell.meta.src as usize;
            let res = self.rsp_resource(dest);
            self.rsp_busy[res] = (!cell.eop).then_some(self.rsp_domain_index(RspSource::Target(t)));
            if cell.eop {
                self.rsp_head_start[t] = None;
            }
            self.rsp_pipe
                .push_back((cycle + u64::from(self.cfg.pipe_size), dest, cell.clone(), *status));
        }
        for i in 0..n_init {
            if !err_grant[i] {
                continue;
            }
            let (_, cell) = self.err_q[i].pop_front().expect("error grant with empty queue");
            self.err_done[i] = Some(cycle);
            self.err_visible[i] =
                self.err_q[i].front().map(|(ready, _)| (*ready).max(cycle + 1));
            self.rsp_pipe
                .push_back((cycle + u64::from(self.cfg.pipe_size), i, cell, RspStatus::Err));
        }

        // Deliveries retire outstanding transactions before this cycle's
        // decisions are taken.
        for (i, slot) in init_rsp.iter().enumerate() {
            if let Some((cell, _)) = slot {
                if cell.eop {
                    let tid = cell.meta.tid;
                    if let Some(pos) = self.outstanding[i].iter().position(|(t, _)| *t == tid) {
                        self.outstanding[i].remove(pos);
                    }
                }
            }
        }

        self.decide_request_path(inputs, &transferred_req);
        self.decide_response_path(inputs, &transferred_rsp);

        self.cycle += 1;
        NodeOutputs { init_gnt, targ_req, init_rsp, targ_rgnt }
    }

    fn domain_source(&self, resource: usize, idx: usize) -> RspSource {
        let n_targ = self.n_targ();
        if idx < n_targ {
            RspSource::Target(idx)
        } else if self.shared() {
            RspSource::ErrorQueue(idx - n_targ)
        } else {
            RspSource::ErrorQueue(resource)
        }
    }

    /// A first cell of a new packet may be granted only while the initiator
    /// has pipe room and, under ordered protocols, no outstanding
    /// transaction to a different destination.
    fn admissible(&self, i: usize, dest: usize) -> bool {
        let outstanding = &self.outstanding[i];
        if outstanding.len() >= self.cfg.effective_pipe() as usize {
            return false;
        }
        if matches!(self.cfg.protocol, ProtocolType::T1 | ProtocolType::T2) {
            return outstanding.iter().all(|&(_, d)| d == dest);
        }
        true
    }

    fn decide_request_path(&mut self, inputs: &NodeInputs, transferred: &[bool]) {
        let cycle = self.cycle;
        let n_init = self.n_init();
        // Per-initiator candidacy, computed once per cycle.
        let mut candidate: Vec<Option<(usize, u64)>> = vec![None; n_init];
        for i in 0..n_init {
            let Some(cell) = &inputs.init_req[i] else { continue };
            if transferred[i] {
                continue;
            }
            let dest = self.dest_of(i, cell);
            if let Some(owner) = self.chunk_owner[dest] {
                if owner != i {
                    continue;
                }
            }
            if !self.admissible(i, dest) {
                continue;
            }
            let age = cycle - self.head_start[i].expect("requesting port has an age");
            candidate[i] = Some((dest, age));
        }
        for res in 0..self.req_grant.len() {
            if let Some(owner) = self.req_busy[res] {
                self.req_grant[res] = Some(owner);
                continue;
            }
            let mut mask = 0u64;
            let mut waited = vec![0u64; n_init];
            for (i, cand) in candidate.iter().enumerate() {
                if let Some((dest, age)) = cand {
                    if self.req_resource(*dest) == res {
                        mask |= 1 << i;
                        waited[i] = *age;
                    }
                }
            }
            self.req_grant[res] = if mask == 0 {
                None
            } else {
                self.req_arbs[res]
                    .arbitrate(cycle, mask, &waited)
                    .expect("mask is non-empty")
            };
        }
    }

    fn decide_response_path(&mut self, inputs: &NodeInputs, transferred: &[bool]) {
        let cycle = self.cycle;
        let n_targ = self.n_targ();
        for res in 0..self.rsp_grant.len() {
            if let Some(owner) = self.rsp_busy[res] {
                self.rsp_grant[res] = Some(owner);
                continue;
            }
            let domain = self.rsp_arbs[res].n();
            let mut mask = 0u64;
            let mut waited = vec![0u64; domain];
            for t in 0..n_targ {
                let Some((cell, _)) = &inputs.targ_rsp[t] else { continue };
                if transferred[t] {
                    continue;
                }
                let dest = cell.meta.src as usize;
                if self.rsp_resource(dest) != res {
                    continue;
                }
                let idx = self.rsp_domain_index(RspSource::Target(t));
                mask |= 1 << idx;
                waited[idx] = cycle - self.rsp_head_start[t].expect("presented head has an age");
            }
            let err_candidates: Vec<usize> = if self.shared() {
                (0..self.n_init()).collect()
            } else {
                vec![res]
            };
            for i in err_candidates {
                if let Some(visible) = self.err_visible[i] {
                    if visible <= cycle {
                        let idx = self.rsp_domain_index(RspSource::ErrorQueue(i));
                        mask |= 1 << idx;
                        waited[idx] = cycle - visible;
                    }
                }
            }
            self.rsp_grant[res] = if mask == 0 {
                None
            } else {
                self.rsp_arbs[res]
                    .arbitrate(cycle, mask, &waited)
                    .expect("mask is non-empty")
            };
        }
    }
}

/// Runs the clocked engine to quiescence or the cycle budget.
pub fn ca_run(
    config: &NodeConfig,
    stimulus: &Stimulus,
    priority_schedule: &[(u64, Vec<u64>)],
    seed: u64,
    cycle_budget: u64,
) -> Result<RunOutcome, crate::protocol::ProtocolError> {
    let n_init = config.n_init as usize;
    let n_targ = config.n_targ as usize;
    let programs = compile_programs(config, stimulus)?;
    let mut node = CaNode::new(config);
    let mut inits: Vec<ReqPortCursor> = programs.into_iter().map(ReqPortCursor::new).collect();
    let mut targs: Vec<RspPortCursor> = (0..n_targ).map(|_| RspPortCursor::default()).collect();
    let mut servers: Vec<TargetServer> = (0..n_targ)
        .map(|t| {
            TargetServer::new(config.target_profiles[t], port_stream_seed(seed, n_init + t))
        })
        .collect();
    let mut partial: Vec<Vec<Cell>> = vec![Vec::new(); n_targ];

    let mut traces: Vec<PortTrace> = (0..n_init)
        .map(|i| PortTrace {
            name: init_port_name(i),
            kind: PortKind::Initiator,
            width_bits: config.width_bits,
            cycles: Vec::new(),
        })
        .chain((0..n_targ).map(|t| PortTrace {
            name: targ_port_name(t),
            kind: PortKind::Target,
            width_bits: config.width_bits,
            cycles: Vec::new(),
        }))
        .collect();

    let mut schedule = priority_schedule.iter().peekable();
    for cycle in 0..cycle_budget {
        while let Some((_, vector)) = schedule.next_if(|(at, _)| *at <= cycle) {
            let _ = node.program_priority(vector);
        }

        let inputs = NodeInputs {
            init_req: inits.iter().map(|c| c.face(cycle).cloned()).collect(),
            targ_rsp: targs
                .iter()
                .map(|c| c.face(cycle).map(|(cell, status)| (cell.clone(), status)))
                .collect(),
        };
        let outputs = node.step(&inputs);

        // Record this cycle's signals at every port.
        for i in 0..n_init {
            let mut sig = PortSignals::default();
            if let Some(cell) = &inputs.init_req[i] {
                write_req_half(&mut sig, cell, outputs.init_gnt[i]);
            }
            if let Some((cell, status)) = &outputs.init_rsp[i] {
                write_rsp_half(&mut sig, cell, *status, true);
            }
            traces[i].cycles.push(sig);
        }
        for t in 0..n_targ {
            let mut sig = PortSignals::default();
            if let Some(cell) = &outputs.targ_req[t] {
                write_req_half(&mut sig, cell, true);
            }
            if let Some((cell, status)) = &inputs.targ_rsp[t] {
                write_rsp_half(&mut sig, cell, *status, outputs.targ_rgnt[t]);
            }
            traces[n_init + t].cycles.push(sig);
        }

        // Harness side of the transfers.
        for i in 0..n_init {
            if outputs.init_gnt[i] && inputs.init_req[i].is_some() {
                inits[i].advance(cycle);
            }
        }
        for t in 0..n_targ {
            if let Some(cell) = &outputs.targ_req[t] {
                let eop = cell.eop;
                partial[t].push(cell.clone());
                if eop {
                    let cells = std::mem::take(&mut partial[t]);
                    let meta = cells[0].meta;
                    let data = match meta.opcode.kind {
                        OpKind::Load => Vec::new(),
                        _ => crate::protocol::rebuild_payload(&cells, config.endianness)
                            .expect("engine-built packet reassembles"),
                    };
                    let req = Request {
                        src: meta.src,
                        tid: meta.tid,
                        opcode: meta.opcode,
                        addr: meta.addr,
                        data,
                        chunk_id: None,
                        issue_cycle: 0,
                    };
                    let (ready, status, payload) = servers[t].execute(cycle, &req);
                    let cells = build_response_cells(
                        meta,
                        status,
                        &payload,
                        config.width_bits,
                        config.protocol,
                        config.endianness,
                    )
                    .expect("engine-built response serializes");
                    targs[t].push(RspPacket { cells, status, ready_cycle: ready });
                }
            }
            if outputs.targ_rgnt[t] && inputs.targ_rsp[t].is_some() {
                targs[t].advance(cycle);
            }
        }

        let harness_idle = inits.iter().all(ReqPortCursor::exhausted)
            && targs.iter().all(RspPortCursor::exhausted)
            && partial.iter().all(Vec::is_empty);
        if harness_idle && node.is_quiescent() {
            break;
        }
    }
    Ok(finalize_traces(traces, cycle_budget))
}

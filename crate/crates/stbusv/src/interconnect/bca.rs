//! The event-driven bus-cycle-accurate engine.
//!
//! Instead of clocking every port every cycle, this engine keeps a calendar
//! of active cycles. Each scheduled cycle carries exactly the work that can
//! change signals: presentation events (a packet face appearing), granted
//! transfers, pipeline arrivals, deliveries, and arbitration decision points.
//! Idle stretches are skipped entirely; waveforms are synthesized from
//! per-port snapshots with hold semantics afterwards.
//!
//! The grant timing rules are the same as the clocked engine's (registered
//! per-packet grants, one-cycle turnaround after eop, pipe_size forwarding
//! latency). Arbiter state mutates only on grants and the waited inputs are
//! derived from face-visible cycles, so skipping decision evaluations on
//! cycles without grantable work is behavior-preserving.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::protocol::{
    build_response_cells, Cell, CellMeta, OpKind, ProtocolError, ProtocolType, Request, RspStatus,
};
use crate::rng::port_stream_seed;

use super::harness::{
    compile_programs, finalize_traces, write_req_half, write_rsp_half, ReqPortCursor, RspPacket,
    RspPortCursor, RunOutcome, Stimulus,
};
use super::target::TargetServer;
use super::{
    init_port_name, targ_port_name, Arbiter, ArbiterParams, NodeConfig, PortKind, PortSignals,
    PortTrace,
};

/// A fault knob for analyzer validation: the run stays protocol-clean but
/// its waveforms shift, which only the cycle-alignment comparison can catch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlantedFault {
    /// Extra cycles added to every response-ready time at target 0.
    pub response_skew: u64,
}

/// Per-port waveform recorder: explicit snapshots on active cycles, hold
/// semantics in between.
struct Recorder {
    cur: PortSignals,
    snaps: BTreeMap<u64, PortSignals>,
}

impl Recorder {
    fn new() -> Self {
        Self { cur: PortSignals::default(), snaps: BTreeMap::new() }
    }

    fn set_req_half(&mut self, cycle: u64, face: Option<(&Cell, bool)>) {
        match face {
            Some((cell, gnt)) => write_req_half(&mut self.cur, cell, gnt),
            None => super::harness::clear_req_half(&mut self.cur),
        }
        self.snaps.insert(cycle, self.cur);
    }

    fn set_rsp_half(&mut self, cycle: u64, face: Option<(&Cell, RspStatus, bool)>) {
        match face {
            Some((cell, status, r_gnt)) => write_rsp_half(&mut self.cur, cell, status, r_gnt),
            None => super::harness::clear_rsp_half(&mut self.cur),
        }
        self.snaps.insert(cycle, self.cur);
    }

    fn densify(self, name: String, kind: PortKind, width_bits: u32, len: u64) -> PortTrace {
        let mut cycles = Vec::with_capacity(len as usize);
        let mut current = PortSignals::default();
        let mut iter = self.snaps.into_iter().peekable();
        for c in 0..len {
            while let Some((_, sig)) = iter.next_if(|(at, _)| *at <= c) {
                current = sig;
            }
            cycles.push(current);
        }
        PortTrace { name, kind, width_bits, cycles }
    }

    fn last_cycle(&self) -> Option<u64> {
        self.snaps.keys().next_back().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RspSource {
    Target(usize),
    ErrorQueue(usize),
}

#[derive(Default)]
struct CycleWork {
    refresh_req: BTreeSet<usize>,
    refresh_req_targ: BTreeSet<usize>,
    refresh_rsp_targ: BTreeSet<usize>,
    refresh_rsp_init: BTreeSet<usize>,
    visible_req: BTreeSet<usize>,
    visible_rsp: BTreeSet<usize>,
    visible_err: BTreeSet<usize>,
    req_transfer: BTreeSet<usize>,
    rsp_transfer_targ: BTreeSet<usize>,
    rsp_transfer_err: BTreeSet<usize>,
    req_arrival: Vec<(usize, Cell)>,
    rsp_arrival: Vec<(usize, Cell, RspStatus)>,
    decide_req: BTreeSet<usize>,
    decide_rsp: BTreeSet<usize>,
}

struct BcaEngine<'a> {
    cfg: &'a NodeConfig,
    fault: PlantedFault,
    calendar: BTreeMap<u64, CycleWork>,
    // Harness state.
    inits: Vec<ReqPortCursor>,
    targs: Vec<RspPortCursor>,
    servers: Vec<TargetServer>,
    partial: Vec<Vec<Cell>>,
    init_rec: Vec<Recorder>,
    targ_rec: Vec<Recorder>,
    // Node state (independent re-implementation of the scheduling rules).
    req_arbs: Vec<Arbiter>,
    req_busy: Vec<Option<usize>>,
    /// Grant issued for the next cycle but not yet transferred.
    req_pending: Vec<bool>,
    req_waiting: Vec<BTreeSet<usize>>,
    chunk_owner: Vec<Option<usize>>,
    outstanding: Vec<Vec<(u8, usize)>>,
    rsp_arbs: Vec<Arbiter>,
    rsp_busy: Vec<Option<usize>>,
    rsp_pending: Vec<bool>,
    rsp_waiting: Vec<BTreeSet<usize>>,
    /// Pending node-generated ERR cells per initiator: (ready cycle, cell).
    err_q: Vec<VecDeque<(u64, Cell)>>,
    err_visible: Vec<Option<u64>>,
    err_done: Vec<Option<u64>>,
    schedule: Vec<(u64, Vec<u64>)>,
}

impl<'a> BcaEngine<'a> {
    fn shared(&self) -> bool {
        matches!(self.cfg.arch, super::Arch::SharedBus)
    }

    fn n_init(&self) -> usize {
        self.cfg.n_init as usize
    }

    fn n_targ(&self) -> usize {
        self.cfg.n_targ as usize
    }

    fn bucket(&self) -> usize {
        self.n_targ()
    }

    fn pipe(&self) -> u64 {
        u64::from(self.cfg.pipe_size)
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

    fn domain_source(&self, resource: usize, idx: usize) -> RspSource {
        if idx < self.n_targ() {
            RspSource::Target(idx)
        } else if self.shared() {
            RspSource::ErrorQueue(idx - self.n_targ())
        } else {
            RspSource::ErrorQueue(resource)
        }
    }

    fn work(&mut self, cycle: u64) -> &mut CycleWork {
        self.calendar.entry(cycle).or_default()
    }

    fn run(&mut self, cycle_budget: u64) {
        // Seed the calendar with initial packet visibility and reprogram points.
        for i in 0..self.n_init() {
            if let Some(v) = self.inits[i].visible() {
                self.work(v).visible_req.insert(i);
            }
        }
        let points: Vec<u64> = self.schedule.iter().map(|(at, _)| *at).collect();
        for at in points {
            self.work(at);
        }

        while let Some((&cycle, _)) = self.calendar.first_key_value() {
            if cycle >= cycle_budget {
                break;
            }
            let work = self.calendar.remove(&cycle).expect("checked key");
            self.process_cycle(cycle, work);
        }
    }

    fn process_cycle(&mut self, cycle: u64, work: CycleWork) {
        let schedule: Vec<Vec<u64>> = self
            .schedule
            .iter()
            .filter(|(at, _)| *at == cycle)
            .map(|(_, v)| v.clone())
            .collect();
        for vector in schedule {
            for arb in &mut self.req_arbs {
                let _ = arb.program_priority(&vector);
            }
        }

        // Phase 1: idle refreshes (overwritten by later events this cycle).
        for i in work.refresh_req {
            self.init_rec[i].set_req_half(cycle, None);
        }
        for t in work.refresh_req_targ {
            self.targ_rec[t].set_req_half(cycle, None);
        }
        for t in work.refresh_rsp_targ {
            self.targ_rec[t].set_rsp_half(cycle, None);
        }
        for i in work.refresh_rsp_init {
            self.init_rec[i].set_rsp_half(cycle, None);
        }

        // Phase 2: faces becoming visible start requesting.
        for i in work.visible_req {
            let cell = self.inits[i].face(cycle).expect("visibility implies a face").clone();
            self.init_rec[i].set_req_half(cycle, Some((&cell, false)));
            let dest = self.inits[i].dest().unwrap_or(self.bucket());
            let res = self.req_resource(dest);
            self.req_waiting[res].insert(i);
            self.work(cycle).decide_req.insert(res);
        }
        for t in work.visible_rsp {
            let (cell, status) = {
                let (c, s) = self.targs[t].face(cycle).expect("visibility implies a face");
                (c.clone(), s)
            };
            self.targ_rec[t].set_rsp_half(cycle, Some((&cell, status, false)));
            let dest = cell.meta.src as usize;
            let res = self.rsp_resource(dest);
            let idx = self.rsp_domain_index(RspSource::Target(t));
            self.rsp_waiting[res].insert(idx);
            self.work(cycle).decide_rsp.insert(res);
        }
        for i in work.visible_err {
            let resources: Vec<usize> = if self.shared() { vec![0] } else { vec![i] };
            for res in resources {
                let idx = self.rsp_domain_index(RspSource::ErrorQueue(i));
                self.rsp_waiting[res].insert(idx);
                self.work(cycle).decide_rsp.insert(res);
            }
        }

        // Phase 3: granted request-cell transfers.
        for i in work.req_transfer {
            self.req_transfer(cycle, i);
        }
        // Phase 4: granted response-cell transfers.
        for t in work.rsp_transfer_targ {
            self.rsp_transfer_target(cycle, t);
        }
        for i in work.rsp_transfer_err {
            self.rsp_transfer_error(cycle, i);
        }
        // Phase 5: request arrivals at targets.
        for (t, cell) in work.req_arrival {
            self.req_arrival(cycle, t, cell);
        }
        // Phase 6: response deliveries at initiators.
        for (i, cell, status) in work.rsp_arrival {
            self.rsp_arrival(cycle, i, cell, status);
        }
        // Phase 7: arbitration decisions for cycle + 1.
        for res in work.decide_req {
            self.decide_req(cycle, res);
        }
        for res in work.decide_rsp {
            self.decide_rsp(cycle, res);
        }
    }

    fn req_transfer(&mut self, cycle: u64, i: usize) {
        let cell = self.inits[i]
            .face(cycle)
            .expect("granted port presents a cell")
            .clone();
        let first_cell = self.inits[i].current.as_ref().expect("face implies packet").idx == 0;
        self.init_rec[i].set_req_half(cycle, Some((&cell, true)));

        let dest = self.inits[i].dest().unwrap_or(self.bucket());
        let res = self.req_resource(dest);
        self.req_pending[res] = false;
        if first_cell {
            self.outstanding[i].push((cell.meta.tid, dest));
        }
        if cell.lck {
            self.chunk_owner[dest] = Some(i);
        } else if cell.eop && self.chunk_owner[dest] == Some(i) {
            self.chunk_owner[dest] = None;
        }
        if dest == self.bucket() {
            if cell.eop {
                self.enqueue_error(cycle, cell.meta);
            }
        } else {
            self.work(cycle + self.pipe()).req_arrival.push((dest, cell.clone()));
        }

        if cell.eop {
            self.req_busy[res] = None;
            self.inits[i].advance(cycle);
            self.work(cycle + 1).refresh_req.insert(i);
            if let Some(v) = self.inits[i].visible() {
                self.work(v).visible_req.insert(i);
            }
            if !self.req_waiting[res].is_empty() {
                self.work(cycle).decide_req.insert(res);
            }
            // A released chunk lock can unblock waiters of another resource
            // only on a shared bus, where the lock and the bus differ; the
            // same decide call covers it.
        } else {
            self.req_busy[res] = Some(i);
            self.inits[i].advance(cycle);
            self.work(cycle + 1).req_transfer.insert(i);
        }
    }

    fn rsp_transfer_target(&mut self, cycle: u64, t: usize) {
        let (cell, status) = {
            let (c, s) = self.targs[t].face(cycle).expect("granted port presents a cell");
            (c.clone(), s)
        };
        self.targ_rec[t].set_rsp_half(cycle, Some((&cell, status, true)));
        let dest = cell.meta.src as usize;
        let res = self.rsp_resource(dest);
        self.rsp_pending[res] = false;
        self.work(cycle + self.pipe()).rsp_arrival.push((dest, cell.clone(), status));
        if cell.eop {
            self.rsp_busy[res] = None;
            if let Some(v) = self.targs[t].advance(cycle) {
                self.work(v).visible_rsp.insert(t);
            }
            self.work(cycle + 1).refresh_rsp_targ.insert(t);
            if !self.rsp_waiting[res].is_empty() {
                self.work(cycle).decide_rsp.insert(res);
            }
        } else {
            self.rsp_busy[res] = Some(self.rsp_domain_index(RspSource::Target(t)));
            self.targs[t].advance(cycle);
            self.work(cycle + 1).rsp_transfer_targ.insert(t);
        }
    }

    fn rsp_transfer_error(&mut self, cycle: u64, i: usize) {
        let (_, cell) = self.err_q[i].pop_front().expect("error grant with empty queue");
        let res = self.rsp_resource(i);
        self.rsp_pending[res] = false;
        self.err_done[i] = Some(cycle);
        self.err_visible[i] = None;
        if let Some((ready, _)) = self.err_q[i].front() {
            let visible = (*ready).max(cycle + 1);
            self.err_visible[i] = Some(visible);
            self.work(visible).visible_err.insert(i);
        }
        self.work(cycle + self.pipe()).rsp_arrival.push((i, cell, RspStatus::Err));
        if !self.rsp_waiting[res].is_empty() {
            self.work(cycle).decide_rsp.insert(res);
        }
    }

    fn req_arrival(&mut self, cycle: u64, t: usize, cell: Cell) {
        self.targ_rec[t].set_req_half(cycle, Some((&cell, true)));
        self.work(cycle + 1).refresh_req_targ.insert(t);
        let eop = cell.eop;
        self.partial[t].push(cell);
        if eop {
            let cells = std::mem::take(&mut self.partial[t]);
            let meta = cells[0].meta;
            let data = match meta.opcode.kind {
                OpKind::Load => Vec::new(),
                _ => crate::protocol::rebuild_payload(&cells, self.cfg.endianness)
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
            let (mut ready, status, payload) = self.servers[t].execute(cycle, &req);
            if t == 0 {
                ready += self.fault.response_skew;
            }
            let cells = build_response_cells(
                meta,
                status,
                &payload,
                self.cfg.width_bits,
                self.cfg.protocol,
                self.cfg.endianness,
            )
            .expect("engine-built response serializes");
            if let Some(v) = self.targs[t].push(RspPacket { cells, status, ready_cycle: ready }) {
                self.work(v).visible_rsp.insert(t);
            }
        }
    }

    fn rsp_arrival(&mut self, cycle: u64, i: usize, cell: Cell, status: RspStatus) {
        self.init_rec[i].set_rsp_half(cycle, Some((&cell, status, true)));
        self.work(cycle + 1).refresh_rsp_init.insert(i);
        if cell.eop {
            let tid = cell.meta.tid;
            if let Some(pos) = self.outstanding[i].iter().position(|(t, _)| *t == tid) {
                self.outstanding[i].remove(pos);
            }
            // Freed pipe room or drained ordering state can unblock this
            // initiator's waiting head packet.
            if self.inits[i].face(cycle).is_some() {
                let dest = self.inits[i].dest().unwrap_or(self.bucket());
                let res = self.req_resource(dest);
                if self.req_waiting[res].contains(&i) {
                    self.work(cycle).decide_req.insert(res);
                }
            }
        }
    }

    fn enqueue_error(&mut self, cycle: u64, meta: CellMeta) {
        let i = meta.src as usize;
        let ready = cycle + self.pipe();
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
            let visible = ready.max(after);
            self.err_visible[i] = Some(visible);
            self.work(visible).visible_err.insert(i);
        }
    }

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

    fn decide_req(&mut self, cycle: u64, res: usize) {
        if self.req_busy[res].is_some() || self.req_pending[res] {
            return;
        }
        let n_init = self.n_init();
        let mut mask = 0u64;
        let mut waited = vec![0u64; n_init];
        for &i in &self.req_waiting[res] {
            let Some(cursor) = self.inits[i].current.as_ref() else { continue };
            if cursor.visible_cycle > cycle {
                continue;
            }
            let dest = cursor.dest.unwrap_or(self.bucket());
            if let Some(owner) = self.chunk_owner[dest] {
                if owner != i {
                    continue;
                }
            }
            if !self.admissible(i, dest) {
                continue;
            }
            mask |= 1 << i;
            waited[i] = cycle - cursor.visible_cycle;
        }
        if mask == 0 {
            return;
        }
        match self.req_arbs[res].arbitrate(cycle, mask, &waited).expect("non-empty mask") {
            Some(winner) => {
                self.req_waiting[res].remove(&winner);
                self.req_pending[res] = true;
                self.work(cycle + 1).req_transfer.insert(winner);
            }
            None => {
                if let Some(next) = self.req_arbs[res].bw_next_decision(cycle + 1, mask) {
                    self.work(next).decide_req.insert(res);
                }
            }
        }
    }

    fn decide_rsp(&mut self, cycle: u64, res: usize) {
        if self.rsp_busy[res].is_some() || self.rsp_pending[res] {
            return;
        }
        let domain = self.rsp_arbs[res].n();
        let mut mask = 0u64;
        let mut waited = vec![0u64; domain];
        for &idx in &self.rsp_waiting[res] {
            match self.domain_source(res, idx) {
                RspSource::Target(t) => {
                    let Some(cursor) = self.targs[t].current.as_ref() else { continue };
                    if cursor.visible_cycle > cycle {
                        continue;
                    }
                    mask |= 1 << idx;
                    waited[idx] = cycle - cursor.visible_cycle;
                }
                RspSource::ErrorQueue(i) => {
                    let Some(visible) = self.err_visible[i] else { continue };
                    if visible > cycle {
                        continue;
                    }
                    mask |= 1 << idx;
                    waited[idx] = cycle - visible;
                }
            }
        }
        if mask == 0 {
            return;
        }
        if let Some(winner) = self.rsp_arbs[res].arbitrate(cycle, mask, &waited).expect("non-empty mask")
        {
            self.rsp_waiting[res].remove(&winner);
            self.rsp_pending[res] = true;
            match self.domain_source(res, winner) {
                RspSource::Target(t) => {
                    self.work(cycle + 1).rsp_transfer_targ.insert(t);
                }
                RspSource::ErrorQueue(i) => {
                    self.work(cycle + 1).rsp_transfer_err.insert(i);
                }
            }
        }
    }
}

/// Runs the event-driven engine; waveform-equivalent to [`super::ca::ca_run`].
pub fn bca_run(
    config: &NodeConfig,
    stimulus: &Stimulus,
    priority_schedule: &[(u64, Vec<u64>)],
    seed: u64,
    cycle_budget: u64,
) -> Result<RunOutcome, ProtocolError> {
    bca_run_with_fault(
        config,
        stimulus,
        priority_schedule,
        seed,
        cycle_budget,
        PlantedFault::default(),
    )
}

/// [`bca_run`] with a planted scheduling fault, for validating that the
/// alignment analyzer catches timing-only divergence.
pub fn bca_run_with_fault(
    config: &NodeConfig,
    stimulus: &Stimulus,
    priority_schedule: &[(u64, Vec<u64>)],
    seed: u64,
    cycle_budget: u64,
    fault: PlantedFault,
) -> Result<RunOutcome, ProtocolError> {
    let n_init = config.n_init as usize;
    let n_targ = config.n_targ as usize;
    let shared = matches!(config.arch, super::Arch::SharedBus);
    let n_req_res = if shared { 1 } else { n_targ + 1 };
    let n_rsp_res = if shared { 1 } else { n_init };
    let rsp_domain = if shared { n_targ + n_init } else { n_targ + 1 };
    let req_params = ArbiterParams {
        priority: config.priority_vector.clone(),
        latency_budget: config.latency_budget.clone(),
        bw_quota: (config.arb_policy == super::ArbPolicy::BandwidthLimited)
            .then(|| config.bw_quota.clone()),
    };

    let programs = compile_programs(config, stimulus)?;
    let mut engine = BcaEngine {
        cfg: config,
        fault,
        calendar: BTreeMap::new(),
        inits: programs.into_iter().map(ReqPortCursor::new).collect(),
        targs: (0..n_targ).map(|_| RspPortCursor::default()).collect(),
        servers: (0..n_targ)
            .map(|t| {
                TargetServer::new(config.target_profiles[t], port_stream_seed(seed, n_init + t))
            })
            .collect(),
        partial: vec![Vec::new(); n_targ],
        init_rec: (0..n_init).map(|_| Recorder::new()).collect(),
        targ_rec: (0..n_targ).map(|_| Recorder::new()).collect(),
        req_arbs: (0..n_req_res)
            .map(|_| Arbiter::new(config.arb_policy, n_init, req_params.clone()))
            .collect(),
        req_busy: vec![None; n_req_res],
        req_pending: vec![false; n_req_res],
        req_waiting: vec![BTreeSet::new(); n_req_res],
        chunk_owner: vec![None; n_targ + 1],
        outstanding: vec![Vec::new(); n_init],
        rsp_arbs: (0..n_rsp_res)
            .map(|_| Arbiter::new(config.arb_policy, rsp_domain, ArbiterParams::neutral(rsp_domain)))
            .collect(),
        rsp_busy: vec![None; n_rsp_res],
        rsp_pending: vec![false; n_rsp_res],
        rsp_waiting: vec![BTreeSet::new(); n_rsp_res],
        err_q: vec![VecDeque::new(); n_init],
        err_visible: vec![None; n_init],
        err_done: vec![None; n_init],
        schedule: priority_schedule.to_vec(),
    };
    engine.run(cycle_budget);

    let len = engine
        .init_rec
        .iter()
        .chain(engine.targ_rec.iter())
        .filter_map(Recorder::last_cycle)
        .max()
        .map_or(0, |c| (c + 1).min(cycle_budget));
    let traces: Vec<PortTrace> = engine
        .init_rec
        .into_iter()
        .enumerate()
        .map(|(i, rec)| rec.densify(init_port_name(i), PortKind::Initiator, config.width_bits, len))
        .chain(engine.targ_rec.into_iter().enumerate().map(|(t, rec)| {
            rec.densify(targ_port_name(t), PortKind::Target, config.width_bits, len)
        }))
        .collect();
    Ok(finalize_traces(traces, cycle_budget))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interconnect::{Arch, ArbPolicy, MapRegion, NodeConfig, TargetProfile};
    use crate::interconnect::ca::ca_run;
    use crate::interconnect::harness::TimedRequest;
    use crate::protocol::{Endianness, OpKind, Opcode, ProtocolType, Request};

    fn config(n_init: u32, n_targ: u32, width: u32, ty: ProtocolType, arch: Arch, pol: ArbPolicy) -> NodeConfig {
        NodeConfig {
            n_init,
            n_targ,
            width_bits: width,
            protocol: ty,
            pipe_size: 4,
            endianness: Endianness::Little,
            arch,
            arb_policy: pol,
            address_map: (0..n_targ)
                .map(|t| MapRegion { base: t * 0x1000, size: 0x1000, target: t })
                .collect(),
            priority_vector: (0..n_init as u64).collect(),
            latency_budget: vec![2; n_init as usize],
            bw_quota: vec![(2, 8); n_init as usize],
            target_profiles: (0..n_targ)
                .map(|t| TargetProfile { base_latency: 1 + u64::from(t) * 2, jitter: (t % 2) as u64 * 3 })
                .collect(),
            clock_period_ns: 10,
            txn_budget_cap: None,
            cycle_budget_cap: None,
        }
    }

    fn req(src: u8, tid: u8, kind: OpKind, size: u32, addr: u32, issue: u64, chunk: Option<u32>) -> TimedRequest {
        let data = match kind {
            OpKind::Load => vec![],
            _ => (0..size).map(|k| (k as u8).wrapping_mul(7).wrapping_add(src)).collect(),
        };
        TimedRequest {
            issue_cycle: issue,
            req: Request { src, tid, opcode: Opcode::new(kind, size), addr, data, chunk_id: chunk, issue_cycle: issue },
        }
    }

    fn check_equal(cfg: &NodeConfig, events: Vec<TimedRequest>, seed: u64) {
        let stim = Stimulus::from_events(cfg.n_init as usize, &events);
        let ca = ca_run(cfg, &stim, &[], seed, 100_000).unwrap();
        let bca = bca_run(cfg, &stim, &[], seed, 100_000).unwrap();
        assert_eq!(ca.total_cycles, bca.total_cycles, "trace lengths differ");
        for (a, b) in ca.traces.iter().zip(bca.traces.iter()) {
            assert_eq!(a.name, b.name);
            for (c, (ra, rb)) in a.cycles.iter().zip(b.cycles.iter()).enumerate() {
                assert_eq!(ra, rb, "port {} cycle {} differs:\n ca={:?}\n bca={:?}", a.name, c, ra, rb);
            }
        }
    }

    #[test]
    fn single_load_one_by_one() {
        let cfg = config(1, 1, 64, ProtocolType::T3, Arch::FullXbar, ArbPolicy::FixedPriority);
        check_equal(&cfg, vec![req(0, 0, OpKind::Load, 4, 0x10, 3, None)], 1);
    }

    #[test]
    fn two_initiators_two_targets_t3() {
        let cfg = config(2, 2, 64, ProtocolType::T3, Arch::FullXbar, ArbPolicy::Lru);
        let events = vec![
            req(0, 0, OpKind::Store, 16, 0x100, 0, None),
            req(1, 0, OpKind::Load, 8, 0x1008, 0, None),
            req(0, 1, OpKind::Load, 16, 0x100, 1, None),
            req(1, 1, OpKind::Swap, 4, 0x1010, 2, None),
            req(0, 2, OpKind::Store, 64, 0x1040, 2, None),
        ];
        check_equal(&cfg, events, 7);
    }

    #[test]
    fn shared_bus_contention_t2() {
        let cfg = config(3, 2, 32, ProtocolType::T2, Arch::SharedBus, ArbPolicy::RoundRobin);
        let events = vec![
            req(0, 0, OpKind::Store, 8, 0x20, 0, None),
            req(1, 0, OpKind::Store, 8, 0x1020, 0, None),
            req(2, 0, OpKind::Load, 4, 0x40, 0, None),
            req(0, 1, OpKind::Load, 8, 0x20, 1, None),
            req(1, 1, OpKind::Load, 8, 0x1020, 1, None),
        ];
        check_equal(&cfg, events, 3);
    }

    #[test]
    fn unmapped_gets_err_and_aligns() {
        let cfg = config(2, 1, 64, ProtocolType::T3, Arch::FullXbar, ArbPolicy::FixedPriority);
        let events = vec![
            req(0, 0, OpKind::Store, 8, 0xFFFF_0000, 0, None),
            req(1, 0, OpKind::Load, 4, 0x14, 1, None),
        ];
        check_equal(&cfg, events, 11);
    }

    #[test]
    fn chunked_traffic_locks_target() {
        let cfg = config(2, 2, 64, ProtocolType::T2, Arch::FullXbar, ArbPolicy::FixedPriority);
        let events = vec![
            req(0, 0, OpKind::Store, 16, 0x100, 0, Some(1)),
            req(0, 1, OpKind::Store, 16, 0x120, 0, Some(1)),
            req(0, 2, OpKind::Store, 16, 0x140, 0, Some(1)),
            req(1, 0, OpKind::Store, 8, 0x180, 1, None),
            req(1, 1, OpKind::Load, 8, 0x1000, 3, None),
        ];
        check_equal(&cfg, events, 5);
    }

    #[test]
    fn empty_stimulus_is_idle_for_budget() {
        let cfg = config(1, 1, 64, ProtocolType::T3, Arch::FullXbar, ArbPolicy::FixedPriority);
        let stim = Stimulus::from_events(1, &[]);
        let ca = ca_run(&cfg, &stim, &[], 1, 50).unwrap();
        let bca = bca_run(&cfg, &stim, &[], 1, 50).unwrap();
        assert_eq!(ca.total_cycles, 50);
        assert_eq!(bca.total_cycles, 50);
        assert!(ca.traces.iter().all(|t| t.cycles.iter().all(|s| *s == PortSignals::default())));
    }

    #[test]
    fn planted_skew_diverges() {
        let cfg = config(1, 1, 64, ProtocolType::T3, Arch::FullXbar, ArbPolicy::FixedPriority);
        let events = vec![req(0, 0, OpKind::Load, 4, 0x10, 0, None)];
        let stim = Stimulus::from_events(1, &events);
        let ca = ca_run(&cfg, &stim, &[], 1, 100_000).unwrap();
        let bad = bca_run_with_fault(&cfg, &stim, &[], 1, 100_000, PlantedFault { response_skew: 1 }).unwrap();
        assert_ne!(ca.traces, bad.traces);
    }
}

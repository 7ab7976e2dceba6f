//! Helpers shared by the integration suites: canonical configs, clean runs,
//! and the fault-injection fixture table.

// Each test binary compiles its own copy and uses a subset. The brute-force
// reference deliberately sticks to indexed scan loops.
#![allow(dead_code, clippy::needless_range_loop)]

use stbusv::interconnect::{
    ca_run, Arch, ArbPolicy, MapRegion, NodeConfig, PortKind, PortSignals, PortTrace, Stimulus,
    TargetProfile, R_OPC_ERR,
};
use stbusv::protocol::{Endianness, OpKind, Opcode, ProtocolType};
use stbusv::verif::{
    check_protocol, gen_traffic, monitor_extract, scoreboard_check, MonitorTxn, RuleId,
    TrafficConstraints, TxnBody, TxnDirection,
};

pub fn config2x2(protocol: ProtocolType) -> NodeConfig {
    NodeConfig {
        n_init: 2,
        n_targ: 2,
        width_bits: 64,
        protocol,
        pipe_size: 4,
        endianness: Endianness::Little,
        arch: Arch::FullXbar,
        arb_policy: ArbPolicy::FixedPriority,
        address_map: vec![
            MapRegion { base: 0x0, size: 0x1000, target: 0 },
            MapRegion { base: 0x1000, size: 0x1000, target: 1 },
        ],
        priority_vector: vec![0; 2],
        latency_budget: vec![0; 2],
        bw_quota: vec![(2, 8); 2],
        target_profiles: vec![
            TargetProfile { base_latency: 2, jitter: 0 },
            TargetProfile { base_latency: 5, jitter: 0 },
        ],
        clock_period_ns: 10,
        txn_budget_cap: None,
        cycle_budget_cap: None,
    }
}

pub fn clean_run(
    protocol: ProtocolType,
    seed: u64,
    count: u64,
    unmapped_ppm: u32,
) -> (NodeConfig, Vec<PortTrace>) {
    let cfg = config2x2(protocol);
    let mut constraints = TrafficConstraints::uniform(2);
    constraints.unmapped_ppm = unmapped_ppm;
    constraints.opcode_weights = [1, 2, 1];
    let events = gen_traffic(seed, &constraints, &cfg, count).expect("traffic");
    let stim = Stimulus::from_events(2, &events);
    let out = ca_run(&cfg, &stim, &[], seed, 100_000).expect("run");
    (cfg, out.traces)
}

pub fn rules_fired(cfg: &NodeConfig, trace: &PortTrace) -> Vec<RuleId> {
    let mut rules: Vec<RuleId> =
        check_protocol(trace, cfg.protocol, cfg.pipe_size).iter().map(|v| v.rule).collect();
    rules.sort();
    rules.dedup();
    rules
}

/// Cell-transfer cycles of the first multi-cell request packet of a trace.
pub fn find_multicell_packet(trace: &PortTrace) -> Option<Vec<usize>> {
    let mut cells = Vec::new();
    for (c, sig) in trace.cycles.iter().enumerate() {
        if sig.req && sig.gnt {
            cells.push(c);
            if sig.eop {
                if cells.len() >= 2 {
                    return Some(cells);
                }
                cells.clear();
            }
        }
    }
    None
}

pub fn synthetic_port(kind: PortKind, rows: Vec<PortSignals>) -> PortTrace {
    PortTrace {
        name: match kind {
            PortKind::Initiator => "init0".into(),
            PortKind::Target => "targ0".into(),
        },
        kind,
        width_bits: 64,
        cycles: rows,
    }
}

pub fn head_row(tid: u8, eop: bool, lck: bool, src: u8) -> PortSignals {
    PortSignals {
        req: true,
        gnt: true,
        opc: Opcode::new(OpKind::Store, 8).encode(),
        addr: 0x100,
        be: 0xFF,
        eop,
        lck,
        src,
        tid,
        ..PortSignals::default()
    }
}

pub fn clean_txns(seed: u64) -> (NodeConfig, Vec<MonitorTxn>) {
    let (cfg, traces) = clean_run(ProtocolType::T3, seed, 120, 0);
    let mut txns = Vec::new();
    for trace in &traces {
        txns.extend(monitor_extract(trace, cfg.endianness));
    }
    (cfg, txns)
}

/// The thirteen fault injections: ten checker rules plus three scoreboard
/// mutation classes. Each entry reports whether the intended detector fired.
pub fn mutation_fixture_results() -> Vec<(String, bool)> {
    let mut results = Vec::new();
    let mut push = |label: &str, detected: bool| results.push((label.to_string(), detected));

    // R1: grant on an idle request channel.
    {
        let (cfg, mut traces) = clean_run(ProtocolType::T3, 1, 60, 0);
        let idle = traces[0].cycles.iter().position(|s| !s.req).expect("idle cycle");
        traces[0].cycles[idle].gnt = true;
        push("R1 gnt-without-req", rules_fired(&cfg, &traces[0]).contains(&RuleId::R1));
    }
    // R2: eop cleared on a packet's final cell.
    {
        let (cfg, mut traces) = clean_run(ProtocolType::T3, 2, 80, 0);
        let trace = traces
            .iter_mut()
            .find(|t| find_multicell_packet(t).is_some())
            .expect("multi-cell packet");
        let cells = find_multicell_packet(trace).expect("found");
        trace.cycles[*cells.last().expect("cells")].eop = false;
        push("R2 missing-eop", rules_fired(&cfg, trace).contains(&RuleId::R2));
    }
    // R3: packet truncated below its expected length.
    {
        let (cfg, mut traces) = clean_run(ProtocolType::T3, 3, 80, 0);
        let trace = traces
            .iter_mut()
            .find(|t| find_multicell_packet(t).is_some())
            .expect("multi-cell packet");
        let cells = find_multicell_packet(trace).expect("found");
        trace.cycles[cells[0]].eop = true;
        for &c in &cells[1..] {
            let keep = trace.cycles[c];
            trace.cycles[c] = PortSignals {
                r_req: keep.r_req,
                r_gnt: keep.r_gnt,
                r_opc: keep.r_opc,
                r_data: keep.r_data,
                r_eop: keep.r_eop,
                r_src: keep.r_src,
                r_tid: keep.r_tid,
                ..PortSignals::default()
            };
        }
        push("R3 wrong-cell-count", rules_fired(&cfg, trace).contains(&RuleId::R3));
    }
    // R4: two responses swapped under the ordered protocol.
    {
        let (cfg, mut traces) = clean_run(ProtocolType::T2, 4, 80, 0);
        let trace = &mut traces[0];
        let singles: Vec<usize> = trace
            .cycles
            .iter()
            .enumerate()
            .filter(|(c, s)| {
                s.r_req
                    && s.r_gnt
                    && s.r_eop
                    && (*c == 0
                        || !(trace.cycles[c - 1].r_req
                            && trace.cycles[c - 1].r_gnt
                            && !trace.cycles[c - 1].r_eop))
            })
            .map(|(c, _)| c)
            .collect();
        let (a, b) = (singles[0], singles[1]);
        let (row_a, row_b) = (trace.cycles[a], trace.cycles[b]);
        let swap = |sig: &mut PortSignals, other: &PortSignals| {
            sig.r_opc = other.r_opc;
            sig.r_data = other.r_data;
            sig.r_src = other.r_src;
            sig.r_tid = other.r_tid;
        };
        swap(&mut trace.cycles[a], &row_b);
        swap(&mut trace.cycles[b], &row_a);
        push("R4 response-order", rules_fired(&cfg, trace).contains(&RuleId::R4));
    }
    // R5: tid reused while outstanding.
    {
        let rows =
            vec![head_row(5, true, false, 0), PortSignals::default(), head_row(5, true, false, 0)];
        let trace = synthetic_port(PortKind::Initiator, rows);
        let cfg = config2x2(ProtocolType::T3);
        push("R5 tid-reuse", rules_fired(&cfg, &trace).contains(&RuleId::R5));
    }
    // R6: more outstanding packets than the pipe allows.
    {
        let mut cfg = config2x2(ProtocolType::T3);
        cfg.pipe_size = 2;
        let rows = vec![
            head_row(1, true, false, 0),
            head_row(2, true, false, 0),
            head_row(3, true, false, 0),
        ];
        let trace = synthetic_port(PortKind::Initiator, rows);
        push("R6 pipe-exceeded", rules_fired(&cfg, &trace).contains(&RuleId::R6));
    }
    // R7: a foreign source granted inside a chunk at the target.
    {
        let rows = vec![head_row(1, true, true, 0), head_row(1, true, false, 1)];
        let trace = synthetic_port(PortKind::Target, rows);
        let cfg = config2x2(ProtocolType::T2);
        push("R7 chunk-interleave", rules_fired(&cfg, &trace).contains(&RuleId::R7));
    }
    // R8: response tid with no matching request.
    {
        let (cfg, mut traces) = clean_run(ProtocolType::T3, 8, 60, 0);
        let delivery = traces[0]
            .cycles
            .iter()
            .position(|s| s.r_req && s.r_gnt)
            .expect("delivery");
        traces[0].cycles[delivery].r_tid = traces[0].cycles[delivery].r_tid.wrapping_add(97);
        push("R8 orphan-response", rules_fired(&cfg, &traces[0]).contains(&RuleId::R8));
    }
    // R9: error response carrying data.
    {
        let (cfg, mut traces) = clean_run(ProtocolType::T3, 9, 120, 250_000);
        let trace = traces
            .iter_mut()
            .find(|t| t.cycles.iter().any(|s| s.r_req && s.r_gnt && s.r_opc == R_OPC_ERR))
            .expect("error response");
        let delivery = trace
            .cycles
            .iter()
            .position(|s| s.r_req && s.r_gnt && s.r_opc == R_OPC_ERR)
            .expect("found");
        trace.cycles[delivery].r_data[3] = 0xBA;
        push("R9 err-with-data", rules_fired(&cfg, trace).contains(&RuleId::R9));
    }
    // R10: address changed between cells of one packet.
    {
        let (cfg, mut traces) = clean_run(ProtocolType::T3, 10, 80, 0);
        let trace = traces
            .iter_mut()
            .find(|t| find_multicell_packet(t).is_some())
            .expect("multi-cell packet");
        let cells = find_multicell_packet(trace).expect("found");
        trace.cycles[cells[1]].addr ^= 0x40;
        push("R10 meta-change", rules_fired(&cfg, trace).contains(&RuleId::R10));
    }
    // Scoreboard: payload corruption at the target side.
    {
        let (cfg, mut txns) = clean_txns(31);
        let victim = txns
            .iter_mut()
            .find(|t| {
                t.kind == PortKind::Target
                    && t.direction == TxnDirection::Req
                    && matches!(&t.body, TxnBody::Req(r) if !r.data.is_empty())
            })
            .expect("data-carrying arrival");
        let (src, tid) = victim.src_tid();
        if let TxnBody::Req(r) = &mut victim.body {
            r.data[0] ^= 0xFF;
        }
        let detected = match scoreboard_check(&txns, &cfg) {
            stbusv::verif::ScoreboardVerdict::Fail(details) => {
                details.iter().any(|d| d.contains(&format!("src {src}, tid {tid}")))
            }
            _ => false,
        };
        push("scoreboard payload-corrupt", detected);
    }
    // Scoreboard: dropped packet.
    {
        let (cfg, mut txns) = clean_txns(32);
        let victim = txns
            .iter()
            .position(|t| t.kind == PortKind::Target && t.direction == TxnDirection::Req)
            .expect("arrival");
        txns.remove(victim);
        push("scoreboard packet-drop", !scoreboard_check(&txns, &cfg).passed());
    }
    // Scoreboard: duplicated packet.
    {
        let (cfg, mut txns) = clean_txns(33);
        let victim = txns
            .iter()
            .find(|t| t.kind == PortKind::Target && t.direction == TxnDirection::Req)
            .expect("arrival")
            .clone();
        txns.push(victim);
        push("scoreboard packet-duplicate", !scoreboard_check(&txns, &cfg).passed());
    }
    results
}

// ---- arbitration brute-force reference ----

use stbusv::interconnect::{Arbiter, ArbiterParams};
use stbusv::rng::SplitMix64;

pub struct Reference {
    policy: ArbPolicy,
    n: usize,
    pub priority: Vec<u64>,
    budget: Vec<u64>,
    quota: Option<Vec<(u32, u32)>>,
    rr_pointer: usize,
    stamps: Vec<u64>,
    stamp_counter: u64,
    grant_cycles: Vec<Vec<u64>>,
}

impl Reference {
    pub fn new(policy: ArbPolicy, n: usize, params: &ArbiterParams) -> Self {
        Self {
            policy,
            n,
            priority: params.priority.clone(),
            budget: params.latency_budget.clone(),
            quota: params.bw_quota.clone(),
            rr_pointer: n - 1,
            stamps: vec![0; n],
            stamp_counter: 1,
            grant_cycles: vec![Vec::new(); n],
        }
    }

    pub fn decide(&mut self, cycle: u64, requesters: &[bool], waited: &[u64]) -> Option<usize> {
        let mut winner: Option<usize> = None;
        match self.policy {
            ArbPolicy::FixedPriority => {
                for i in 0..self.n {
                    if requesters[i] {
                        winner = Some(i);
                        break;
                    }
                }
            }
            ArbPolicy::ProgrammablePriority => {
                let mut best = 0u64;
                for i in 0..self.n {
                    if requesters[i] && (winner.is_none() || self.priority[i] > best) {
                        winner = Some(i);
                        best = self.priority[i];
                    }
                }
            }
            ArbPolicy::RoundRobin => {
                for step in 1..=self.n {
                    let i = (self.rr_pointer + step) % self.n;
                    if requesters[i] {
                        winner = Some(i);
                        break;
                    }
                }
            }
            ArbPolicy::Lru => {
                let mut best = u64::MAX;
                for i in 0..self.n {
                    if requesters[i] && self.stamps[i] < best {
                        winner = Some(i);
                        best = self.stamps[i];
                    }
                }
            }
            ArbPolicy::LatencyBased => {
                let mut best = i128::MIN;
                for i in 0..self.n {
                    if requesters[i] {
                        let score = waited[i] as i128 - self.budget[i] as i128;
                        if winner.is_none() || score > best {
                            winner = Some(i);
                            best = score;
                        }
                    }
                }
            }
            ArbPolicy::BandwidthLimited => {
                let quota = self.quota.as_ref().expect("bandwidth params");
                for i in 0..self.n {
                    if !requesters[i] {
                        continue;
                    }
                    let (grants, window) = quota[i];
                    let transfer = cycle + 1;
                    let lo = transfer.saturating_sub(u64::from(window));
                    let recent =
                        self.grant_cycles[i].iter().filter(|&&g| g > lo).count() as u32;
                    if recent < grants {
                        winner = Some(i);
                        break;
                    }
                }
            }
        }
        if let Some(w) = winner {
            self.stamps[w] = self.stamp_counter;
            self.stamp_counter += 1;
            self.rr_pointer = w;
            self.grant_cycles[w].push(cycle + 1);
        }
        winner
    }
}

pub fn params_for(policy: ArbPolicy, n: usize) -> ArbiterParams {
    ArbiterParams {
        priority: (0..n as u64).map(|i| (i * 7 + 2) % 5).collect(),
        latency_budget: (0..n as u64).map(|i| i % 3).collect(),
        bw_quota: (policy == ArbPolicy::BandwidthLimited)
            .then(|| (0..n).map(|i| (1 + (i as u32) % 2, 6)).collect()),
    }
}

/// Drives both implementations with identical requester patterns and waited
/// counters: every non-empty subset in rotation, with granted requesters
/// consumed for one cycle the way a transferred packet head would be.
pub fn drive(policy: ArbPolicy, n: usize, cycles: u64, pattern: impl Fn(u64, &mut SplitMix64) -> u64) {
    let params = params_for(policy, n);
    let mut dut = Arbiter::new(policy, n, params.clone());
    let mut reference = Reference::new(policy, n, &params);
    let mut rng = SplitMix64::new(0xA5A5 + n as u64);
    let mut consumed: Vec<bool> = vec![false; n];
    let mut start: Vec<Option<u64>> = vec![None; n];

    for cycle in 0..cycles {
        let raw = pattern(cycle, &mut rng);
        let mut requesters = vec![false; n];
        let mut mask = 0u64;
        let mut waited = vec![0u64; n];
        for i in 0..n {
            let requesting = raw & (1 << i) != 0 && !consumed[i];
            requesters[i] = requesting;
            if requesting {
                let s = *start[i].get_or_insert(cycle);
                waited[i] = cycle - s;
                mask |= 1 << i;
            } else {
                start[i] = None;
            }
        }
        consumed = vec![false; n];
        if mask == 0 {
            continue;
        }
        let got = dut.arbitrate(cycle, mask, &waited).expect("non-empty set");
        let want = reference.decide(cycle, &requesters, &waited);
        assert_eq!(
            got, want,
            "{policy:?} n={n} cycle={cycle} requesters={requesters:?} waited={waited:?}"
        );
        if let Some(w) = got {
            consumed[w] = true;
            start[w] = None;
        }
    }
}


//! Seeded constrained-random traffic generation.
//!
//! Every enabled initiator draws from its own SplitMix64 stream (run seed
//! XOR port index), so per-port sequences are independent yet reproducible
//! and the merged sequence is a pure function of (seed, constraints, count).

use serde::{Deserialize, Serialize};

use crate::interconnect::{NodeConfig, RouteResult, TimedRequest};
use crate::protocol::{legal_kinds, legal_sizes, OpKind, Opcode, ProtocolType, Request};
use crate::rng::{port_stream_seed, SplitMix64};

use super::VerifError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddrRange {
    pub lo: u32,
    /// Inclusive upper bound.
    pub hi: u32,
}

/// Knobs of the constrained-random generator. Probabilities are integer
/// parts-per-million so generation never touches floating point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficConstraints {
    /// Weights for LOAD, STORE, SWAP.
    pub opcode_weights: [u64; 3],
    /// Weights for sizes 1,2,4,8,16,32,64; illegal (type, width, kind)
    /// combinations are masked out per draw.
    pub size_weights: [u64; 7],
    /// Candidate address ranges; empty means the whole mapped space.
    pub ranges: Vec<AddrRange>,
    /// Fraction of requests aimed at unmapped space.
    pub unmapped_ppm: u32,
    /// Probability of starting a chunk, and its length range.
    pub chunk_ppm: u32,
    pub chunk_len: (u32, u32),
    /// Uniform inter-arrival gap in cycles between requests of one initiator.
    pub inter_arrival: (u32, u32),
    /// Per-initiator inter-arrival overrides.
    pub inter_arrival_per_init: Option<Vec<(u32, u32)>>,
    pub enabled: Vec<bool>,
}

impl TrafficConstraints {
    pub fn uniform(n_init: usize) -> Self {
        Self {
            opcode_weights: [1, 1, 1],
            size_weights: [1; 7],
            ranges: Vec::new(),
            unmapped_ppm: 0,
            chunk_ppm: 0,
            chunk_len: (2, 4),
            inter_arrival: (0, 4),
            inter_arrival_per_init: None,
            enabled: vec![true; n_init],
        }
    }
}

/// One mapped slot pool an initiator can draw from.
#[derive(Debug, Clone)]
struct RegionPool {
    base: u32,
    size: u32,
}

/// Gaps of the address map, for deliberately unmapped traffic.
fn unmapped_gaps(config: &NodeConfig) -> Vec<(u32, u64)> {
    let mut regions: Vec<_> = config.address_map.iter().collect();
    regions.sort_by_key(|r| r.base);
    let mut gaps = Vec::new();
    let mut cursor: u64 = 0;
    for r in &regions {
        if u64::from(r.base) > cursor {
            gaps.push((cursor as u32, u64::from(r.base) - cursor));
        }
        cursor = u64::from(r.base) + u64::from(r.size);
    }
    if cursor < 1 << 32 {
        gaps.push((cursor as u32, (1u64 << 32) - cursor));
    }
    gaps
}

/// Deterministic constrained-random stimulus.
///
/// `count` requests are split evenly across enabled initiators (earlier
/// ports take the remainder). Every emitted request is size-aligned, legal
/// for the protocol type and width, and chunk members share one target.
pub fn gen_traffic(
    seed: u64,
    constraints: &TrafficConstraints,
    config: &NodeConfig,
    count: u64,
) -> Result<Vec<TimedRequest>, VerifError> {
    let n_init = config.n_init as usize;
    if constraints.enabled.len() != n_init {
        return Err(VerifError::InfeasibleConstraints(
            "enabled vector length must equal n_init".into(),
        ));
    }
    if constraints.opcode_weights.iter().all(|&w| w == 0) {
        return Err(VerifError::InfeasibleConstraints("all opcode weights are zero".into()));
    }
    if constraints.size_weights.iter().all(|&w| w == 0) {
        return Err(VerifError::InfeasibleConstraints("all size weights are zero".into()));
    }
    if constraints.chunk_ppm > 0 && constraints.chunk_len.0 < 2 {
        return Err(VerifError::InfeasibleConstraints("chunks must have length >= 2".into()));
    }
    let enabled: Vec<usize> =
        (0..n_init).filter(|&i| constraints.enabled[i]).collect();
    if enabled.is_empty() && count > 0 {
        return Err(VerifError::InfeasibleConstraints("no initiator enabled".into()));
    }

    // Per-initiator pools of mapped regions, filtered by the constraint
    // ranges and (on a partial crossbar) reachability.
    let mut pools: Vec<Vec<RegionPool>> = vec![Vec::new(); n_init];
    for &i in &enabled {
        for region in &config.address_map {
            if !config.reachable(i, region.target as usize) {
                continue;
            }
            let within = constraints.ranges.is_empty()
                || constraints.ranges.iter().any(|r| {
                    u64::from(region.base) >= u64::from(r.lo)
                        && u64::from(region.base) + u64::from(region.size) - 1 <= u64::from(r.hi)
                });
            if within {
                pools[i].push(RegionPool { base: region.base, size: region.size });
            }
        }
        if pools[i].is_empty() {
            return Err(VerifError::InfeasibleConstraints(format!(
                "initiator {i} has no mapped region inside the constraint ranges"
            )));
        }
    }
    let gaps = unmapped_gaps(config);
    if constraints.unmapped_ppm > 0 && gaps.is_empty() {
        return Err(VerifError::InfeasibleConstraints(
            "unmapped traffic requested but the map covers the whole space".into(),
        ));
    }

    let kinds = legal_kinds(config.protocol);
    let chunks_allowed = config.protocol != ProtocolType::T1;

    let mut events = Vec::with_capacity(count as usize);
    for (slot, &i) in enabled.iter().enumerate() {
        let share =
            count / enabled.len() as u64 + u64::from((slot as u64) < count % enabled.len() as u64);
        let mut rng = SplitMix64::new(port_stream_seed(seed, i));
        let mut cycle: u64 = 0;
        let mut tid: u32 = 0;
        let mut chunk_seq: u32 = 0;
        let mut emitted = 0u64;
        while emitted < share {
            let (lo, hi) = constraints
                .inter_arrival_per_init
                .as_ref()
                .map_or(constraints.inter_arrival, |v| v[i]);
            cycle += rng.next_range(u64::from(lo), u64::from(hi.max(lo)));

            let remaining = share - emitted;
            let chunk_len = if chunks_allowed
                && remaining >= u64::from(constraints.chunk_len.0)
                && constraints.chunk_ppm > 0
                && rng.next_ppm(constraints.chunk_ppm)
            {
                let max_len =
                    u64::from(constraints.chunk_len.1.max(constraints.chunk_len.0)).min(remaining);
                rng.next_range(u64::from(constraints.chunk_len.0), max_len) as u32
            } else {
                0
            };

            if chunk_len >= 2 {
                chunk_seq += 1;
                // All members of a chunk head to one target region.
                let pool_idx = rng.next_below(pools[i].len() as u64) as usize;
                for _ in 0..chunk_len {
                    let req = draw_request(
                        &mut rng,
                        constraints,
                        config,
                        kinds,
                        i,
                        &mut tid,
                        &pools[i],
                        Some(pool_idx),
                        &gaps,
                        Some(chunk_seq),
                        cycle,
                    );
                    events.push(TimedRequest { issue_cycle: cycle, req });
                    emitted += 1;
                }
            } else {
                let req = draw_request(
                    &mut rng,
                    constraints,
                    config,
                    kinds,
                    i,
                    &mut tid,
                    &pools[i],
                    None,
                    &gaps,
                    None,
                    cycle,
                );
                events.push(TimedRequest { issue_cycle: cycle, req });
                emitted += 1;
            }
        }
    }
    events.sort_by_key(|e| (e.issue_cycle, e.req.src, e.req.tid));
    Ok(events)
}

#[allow(clippy::too_many_arguments)]
fn draw_request(
    rng: &mut SplitMix64,
    constraints: &TrafficConstraints,
    config: &NodeConfig,
    kinds: &[OpKind],
    init: usize,
    tid: &mut u32,
    pool: &[RegionPool],
    chunk_pool: Option<usize>,
    gaps: &[(u32, u64)],
    chunk_id: Option<u32>,
    issue_cycle: u64,
) -> Request {
    // Opcode kind, masked to the legal set.
    let kind = loop {
        let k = match rng.next_weighted(&constraints.opcode_weights) {
            0 => OpKind::Load,
            1 => OpKind::Store,
            _ => OpKind::Swap,
        };
        if kinds.contains(&k) {
            break k;
        }
    };
    // Size from the weighted legal subset for this kind.
    let legal = legal_sizes(config.protocol, config.width_bits, kind);
    let mut weights = [0u64; 7];
    for (k, (s, w)) in crate::protocol::SIZES
        .iter()
        .zip(constraints.size_weights.iter())
        .enumerate()
    {
        if legal.contains(s) {
            weights[k] = *w;
        }
    }
    if weights.iter().all(|&w| w == 0) {
        // The constraint weights exclude every legal size; fall back to the
        // smallest legal one so generation stays total.
        weights[0] = 1;
    }
    let size = crate::protocol::SIZES[rng.next_weighted(&weights)];

    // Address: unmapped fraction first (never inside a chunk), else a
    // size-aligned slot of a mapped region pool.
    let unmapped =
        chunk_id.is_none() && constraints.unmapped_ppm > 0 && rng.next_ppm(constraints.unmapped_ppm);
    let addr = if unmapped {
        draw_unmapped(rng, gaps, size)
    } else {
        let region = match chunk_pool {
            Some(idx) => &pool[idx],
            None => &pool[rng.next_below(pool.len() as u64) as usize],
        };
        draw_slot(rng, region.base, region.size, size)
    };
    finish_request(rng, init, tid, kind, size, addr, chunk_id, issue_cycle)
}

fn draw_slot(rng: &mut SplitMix64, base: u32, region_size: u32, size: u32) -> u32 {
    let slots = (u64::from(region_size) / u64::from(size)).max(1);
    let slot = rng.next_below(slots);
    base + (slot as u32) * size
}

fn draw_unmapped(rng: &mut SplitMix64, gaps: &[(u32, u64)], size: u32) -> u32 {
    // Pick the first gap that fits an aligned slot; gaps list is non-empty.
    for &(base, len) in gaps {
        let aligned = base.next_multiple_of(size);
        let skip = u64::from(aligned - base);
        if len > skip && (len - skip) >= u64::from(size) {
            let slots = (len - skip) / u64::from(size);
            return aligned + (rng.next_below(slots) as u32) * size;
        }
    }
    gaps[0].0
}

#[allow(clippy::too_many_arguments)]
fn finish_request(
    rng: &mut SplitMix64,
    init: usize,
    tid: &mut u32,
    kind: OpKind,
    size: u32,
    addr: u32,
    chunk_id: Option<u32>,
    issue_cycle: u64,
) -> Request {
    let data = match kind {
        OpKind::Load => Vec::new(),
        _ => (0..size).map(|_| rng.next_byte()).collect(),
    };
    let t = (*tid % 256) as u8;
    *tid += 1;
    Request {
        src: init as u8,
        tid: t,
        opcode: Opcode::new(kind, size),
        addr,
        data,
        chunk_id,
        issue_cycle,
    }
}

/// Routed destination of a request under a config: target index or the
/// error bucket.
pub fn routed_dest(config: &NodeConfig, req: &Request) -> Option<usize> {
    match crate::interconnect::route(req.addr, &config.address_map) {
        RouteResult::Target(t) if config.reachable(req.src as usize, t as usize) => {
            Some(t as usize)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interconnect::{Arch, ArbPolicy, MapRegion, TargetProfile};
    use crate::protocol::Endianness;

    fn config() -> NodeConfig {
        NodeConfig {
            n_init: 2,
            n_targ: 2,
            width_bits: 64,
            protocol: ProtocolType::T3,
            pipe_size: 4,
            endianness: Endianness::Little,
            arch: Arch::FullXbar,
            arb_policy: ArbPolicy::FixedPriority,
            address_map: vec![
                MapRegion { base: 0x0, size: 0x1000, target: 0 },
                MapRegion { base: 0x1000, size: 0x1000, target: 1 },
            ],
            priority_vector: vec![0, 0],
            latency_budget: vec![0, 0],
            bw_quota: vec![(2, 8), (2, 8)],
            target_profiles: vec![TargetProfile::default(); 2],
            clock_period_ns: 10,
            txn_budget_cap: None,
            cycle_budget_cap: None,
        }
    }

    #[test]
    fn zero_count_is_empty() {
        let cfg = config();
        let events = gen_traffic(1, &TrafficConstraints::uniform(2), &cfg, 0).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn same_seed_same_sequence() {
        let cfg = config();
        let c = TrafficConstraints::uniform(2);
        let a = gen_traffic(42, &c, &cfg, 500).unwrap();
        let b = gen_traffic(42, &c, &cfg, 500).unwrap();
        assert_eq!(a, b);
        let c2 = gen_traffic(43, &c, &cfg, 500).unwrap();
        assert_ne!(a, c2);
    }

    #[test]
    fn weights_zero_means_never_drawn() {
        let cfg = config();
        let mut c = TrafficConstraints::uniform(2);
        c.opcode_weights = [1, 0, 0];
        let events = gen_traffic(1, &c, &cfg, 1000).unwrap();
        assert_eq!(events.len(), 1000);
        assert!(events.iter().all(|e| e.req.opcode.kind == OpKind::Load));
    }

    #[test]
    fn all_zero_weights_is_infeasible() {
        let cfg = config();
        let mut c = TrafficConstraints::uniform(2);
        c.opcode_weights = [0, 0, 0];
        assert!(matches!(
            gen_traffic(1, &c, &cfg, 10),
            Err(VerifError::InfeasibleConstraints(_))
        ));
    }

    #[test]
    fn requests_satisfy_invariants() {
        let cfg = config();
        let mut c = TrafficConstraints::uniform(2);
        c.chunk_ppm = 300_000;
        c.unmapped_ppm = 100_000;
        let events = gen_traffic(9, &c, &cfg, 800).unwrap();
        assert_eq!(events.len(), 800);
        for e in &events {
            e.req.validate().expect("generated request is valid");
        }
        // Chunk members share src and resolve to one target.
        for i in 0..2u8 {
            let mine: Vec<_> = events.iter().filter(|e| e.req.src == i).collect();
            for pair in mine.windows(2) {
                if let (Some(a), Some(b)) = (pair[0].req.chunk_id, pair[1].req.chunk_id) {
                    if a == b {
                        assert_eq!(
                            routed_dest(&cfg, &pair[0].req),
                            routed_dest(&cfg, &pair[1].req)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn chi_square_on_mixed_weights() {
        let cfg = config();
        let mut c = TrafficConstraints::uniform(2);
        c.opcode_weights = [1, 1, 2];
        let events = gen_traffic(5, &c, &cfg, 4000).unwrap();
        let mut observed = [0f64; 3];
        for e in &events {
            let k = match e.req.opcode.kind {
                OpKind::Load => 0,
                OpKind::Store => 1,
                OpKind::Swap => 2,
            };
            observed[k] += 1.0;
        }
        let total: f64 = observed.iter().sum();
        let expected = [total / 4.0, total / 4.0, total / 2.0];
        let chi2: f64 = observed
            .iter()
            .zip(expected.iter())
            .map(|(o, e)| (o - e) * (o - e) / e)
            .sum();
        // df = 2, p = 0.001 critical value.
        assert!(chi2 < 13.816, "chi2 = {chi2}");
    }
}

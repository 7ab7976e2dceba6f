//! The twelve-test suite. Test cases are generic templates instantiated
//! against a node configuration, so the same suite runs on every config.

use crate::interconnect::{ArbPolicy, NodeConfig};
use crate::verif::TrafficConstraints;

type ConstraintTemplate = fn(&NodeConfig) -> TrafficConstraints;
type PrioritySchedule = fn(&NodeConfig) -> Vec<(u64, Vec<u64>)>;

#[derive(Debug, Clone)]
pub struct TestCase {
    pub id: &'static str,
    pub description: &'static str,
    /// Config-conditional tests only run when the config uses this policy.
    pub only_for_arb: Option<ArbPolicy>,
    pub txn_budget: u64,
    pub cycle_budget: u64,
    constraints: ConstraintTemplate,
    schedule: PrioritySchedule,
}

impl TestCase {
    pub fn instantiate(&self, config: &NodeConfig) -> TrafficConstraints {
        (self.constraints)(config)
    }

    /// Priority reprogramming points applied identically by both engines.
    pub fn priority_schedule(&self, config: &NodeConfig) -> Vec<(u64, Vec<u64>)> {
        (self.schedule)(config)
    }

    pub fn applicable(&self, config: &NodeConfig) -> bool {
        self.only_for_arb.is_none_or(|p| p == config.arb_policy)
    }
}

fn no_schedule(_: &NodeConfig) -> Vec<(u64, Vec<u64>)> {
    Vec::new()
}

fn lane_size_weights(config: &NodeConfig) -> [u64; 7] {
    let lane_bytes = config.width_bits / 8;
    let mut weights = [0u64; 7];
    let idx = crate::protocol::SIZES
        .iter()
        .position(|&s| s == lane_bytes)
        .expect("lane width is a listed size");
    weights[idx] = 1;
    weights
}

/// The twelve test cases.
pub fn suite() -> Vec<TestCase> {
    vec![
        TestCase {
            id: "t01",
            description: "single read/write sanity at bus-word size",
            only_for_arb: None,
            txn_budget: 80,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                opcode_weights: [1, 1, 0],
                size_weights: lane_size_weights(cfg),
                inter_arrival: (2, 6),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: no_schedule,
        },
        TestCase {
            id: "t02",
            description: "all opcodes crossed with all legal sizes",
            only_for_arb: None,
            txn_budget: 400,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                inter_arrival: (0, 3),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: no_schedule,
        },
        TestCase {
            id: "t03",
            description: "chunked bursts holding the slave allocation",
            only_for_arb: None,
            txn_budget: 300,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                opcode_weights: [1, 2, 1],
                chunk_ppm: 600_000,
                chunk_len: (2, 4),
                inter_arrival: (0, 2),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: no_schedule,
        },
        TestCase {
            id: "t04",
            description: "short loads across targets of different speed (out of order)",
            only_for_arb: None,
            txn_budget: 300,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                opcode_weights: [1, 0, 0],
                size_weights: [2, 1, 1, 0, 0, 0, 0],
                inter_arrival: (0, 1),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: no_schedule,
        },
        TestCase {
            id: "t05",
            description: "latency-based arbitration stress",
            only_for_arb: Some(ArbPolicy::LatencyBased),
            txn_budget: 400,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                inter_arrival: (0, 1),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: no_schedule,
        },
        TestCase {
            id: "t06",
            description: "bandwidth-limited arbitration: one saturating initiator",
            only_for_arb: Some(ArbPolicy::BandwidthLimited),
            txn_budget: 300,
            cycle_budget: 100_000,
            constraints: |cfg| {
                let n = cfg.n_init as usize;
                let mut per_init = vec![(6u32, 14u32); n];
                per_init[0] = (0, 0);
                TrafficConstraints {
                    opcode_weights: [1, 1, 0],
                    size_weights: [1, 1, 1, 1, 0, 0, 0],
                    inter_arrival_per_init: Some(per_init),
                    ..TrafficConstraints::uniform(n)
                }
            },
            schedule: no_schedule,
        },
        TestCase {
            id: "t07",
            description: "least-recently-used fairness under full contention",
            only_for_arb: Some(ArbPolicy::Lru),
            txn_budget: 400,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                opcode_weights: [1, 0, 0],
                size_weights: lane_size_weights(cfg),
                inter_arrival: (0, 0),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: no_schedule,
        },
        TestCase {
            id: "t08",
            description: "programmable priority reprogrammed mid-run",
            only_for_arb: Some(ArbPolicy::ProgrammablePriority),
            txn_budget: 300,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                inter_arrival: (0, 2),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: |cfg| {
                let n = cfg.n_init as u64;
                let ascending: Vec<u64> = (0..n).collect();
                let descending: Vec<u64> = (0..n).rev().collect();
                vec![(150, descending), (300, ascending)]
            },
        },
        TestCase {
            id: "t09",
            description: "all initiators saturating every target",
            only_for_arb: None,
            txn_budget: 500,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                inter_arrival: (0, 0),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: no_schedule,
        },
        TestCase {
            id: "t10",
            description: "unmapped addresses answered with node error responses",
            only_for_arb: None,
            txn_budget: 200,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                opcode_weights: [1, 1, 0],
                unmapped_ppm: 300_000,
                inter_arrival: (1, 4),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: no_schedule,
        },
        TestCase {
            id: "t11",
            description: "size sweep emphasizing sub-word and multi-cell packets",
            only_for_arb: None,
            txn_budget: 300,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                size_weights: [4, 2, 1, 1, 1, 2, 4],
                inter_arrival: (0, 2),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: no_schedule,
        },
        TestCase {
            id: "t12",
            description: "long random soak across every feature",
            only_for_arb: None,
            txn_budget: 1000,
            cycle_budget: 100_000,
            constraints: |cfg| TrafficConstraints {
                chunk_ppm: 200_000,
                chunk_len: (2, 3),
                unmapped_ppm: 20_000,
                inter_arrival: (0, 4),
                ..TrafficConstraints::uniform(cfg.n_init as usize)
            },
            schedule: no_schedule,
        },
    ]
}

pub fn find_test(id: &str) -> Option<TestCase> {
    suite().into_iter().find(|t| t.id == id)
}

//! Cross-engine equivalence and clean-run sweeps: every combination of
//! protocol type, architecture and policy runs the same seeded traffic
//! through both engines; traces must match cycle-for-cycle, checkers must
//! stay silent, the scoreboard must pass, and coverage must be identical.

use stbusv::interconnect::{
    bca_run, ca_run, Arch, ArbPolicy, MapRegion, NodeConfig, PortSignals, Stimulus, TargetProfile,
};
use stbusv::protocol::{Endianness, ProtocolType};
use stbusv::regress::suite;
use stbusv::verif::{
    check_protocol, gen_traffic, monitor_extract, scoreboard_check, CoverageModel,
};

fn sweep_config(index: usize) -> NodeConfig {
    let types = [ProtocolType::T1, ProtocolType::T2, ProtocolType::T3];
    let archs = ["shared", "full", "partial"];
    let widths = [8u32, 16, 32, 64, 128, 256];
    let protocol = types[index % 3];
    let policy = ArbPolicy::ALL[index % 6];
    let arch_kind = archs[(index / 3) % 3];
    let width = widths[(index / 2) % 6];
    let n_init = 1 + (index % 4) as u32;
    let n_targ = 1 + ((index / 2) % 3) as u32;
    let pipe = 1 + (index % 5) as u32;
    let endianness = if index.is_multiple_of(2) { Endianness::Little } else { Endianness::Big };

    let arch = match arch_kind {
        "shared" => Arch::SharedBus,
        "full" => Arch::FullXbar,
        _ => {
            // Connect everything, then cut one edge if the shape allows.
            let mut m = vec![vec![true; n_targ as usize]; n_init as usize];
            if n_init >= 2 && n_targ >= 2 {
                m[1][0] = false;
            }
            Arch::PartialXbar(m)
        }
    };
    NodeConfig {
        n_init,
        n_targ,
        width_bits: width,
        protocol,
        pipe_size: pipe,
        endianness,
        arch,
        arb_policy: policy,
        address_map: (0..n_targ)
            .map(|t| MapRegion { base: 0x1000 * t, size: 0x1000, target: t })
            .collect(),
        priority_vector: (0..u64::from(n_init)).map(|i| (i * 3) % 5).collect(),
        latency_budget: (0..u64::from(n_init)).map(|i| i % 4).collect(),
        bw_quota: (0..n_init).map(|i| (1 + i % 3, 6 + 2 * (i % 2))).collect(),
        target_profiles: (0..n_targ)
            .map(|t| TargetProfile { base_latency: 1 + u64::from(t % 3) * 2, jitter: u64::from(t % 2) * 2 })
            .collect(),
        clock_period_ns: 10,
        txn_budget_cap: None,
        cycle_budget_cap: None,
    }
}

fn assert_equivalent_and_clean(config: &NodeConfig, stim: &Stimulus, schedule: &[(u64, Vec<u64>)], seed: u64, label: &str) {
    let ca = ca_run(config, stim, schedule, seed, 100_000).expect("ca run");
    let bca = bca_run(config, stim, schedule, seed, 100_000).expect("bca run");
    assert_eq!(
        ca.total_cycles, bca.total_cycles,
        "{label}: trace lengths differ ({} vs {})",
        ca.total_cycles, bca.total_cycles
    );
    for (a, b) in ca.traces.iter().zip(bca.traces.iter()) {
        for (c, (ra, rb)) in a.cycles.iter().zip(b.cycles.iter()).enumerate() {
            assert_eq!(ra, rb, "{label}: port {} diverges at cycle {}", a.name, c);
        }
    }

    let mut txns = Vec::new();
    for trace in &ca.traces {
        let violations = check_protocol(trace, config.protocol, config.pipe_size);
        assert!(
            violations.is_empty(),
            "{label}: checker flagged a clean run at {}: {:?}",
            trace.name,
            violations
        );
        txns.extend(monitor_extract(trace, config.endianness));
    }
    let verdict = scoreboard_check(&txns, config);
    assert!(verdict.passed(), "{label}: scoreboard failed: {verdict:?}");

    // Grant soundness straight off the waveforms.
    for trace in &ca.traces {
        for (c, sig) in trace.cycles.iter().enumerate() {
            assert!(!(sig.gnt && !sig.req), "{label}: spurious gnt at {} cycle {c}", trace.name);
            assert!(
                !(sig.r_gnt && !sig.r_req),
                "{label}: spurious r_gnt at {} cycle {c}",
                trace.name
            );
        }
    }

    // Shared-bus exclusivity: one request-channel transfer node-wide.
    if matches!(config.arch, Arch::SharedBus) {
        let init_ports: Vec<_> = ca
            .traces
            .iter()
            .filter(|t| t.name.starts_with("init"))
            .collect();
        for c in 0..ca.total_cycles as usize {
            let transfers = init_ports
                .iter()
                .filter(|t| t.cycles[c].req && t.cycles[c].gnt)
                .count();
            assert!(transfers <= 1, "{label}: {transfers} shared-bus transfers at cycle {c}");
        }
    }

    let mut cov_a = CoverageModel::new(config);
    cov_a.sample_run(config, &txns);
    let mut txns_b = Vec::new();
    for trace in &bca.traces {
        txns_b.extend(monitor_extract(trace, config.endianness));
    }
    let mut cov_b = CoverageModel::new(config);
    cov_b.sample_run(config, &txns_b);
    assert_eq!(cov_a.report(), cov_b.report(), "{label}: coverage reports differ");
}

#[test]
fn engines_agree_across_config_sweep() {
    for index in 0..36 {
        let config = sweep_config(index);
        config.validate().expect("sweep config is valid");
        let mut constraints = stbusv::verif::TrafficConstraints::uniform(config.n_init as usize);
        constraints.chunk_ppm = 150_000;
        constraints.unmapped_ppm = 50_000;
        constraints.inter_arrival = (0, 3);
        let events =
            gen_traffic(1 + index as u64, &constraints, &config, 200).expect("traffic");
        let stim = Stimulus::from_events(config.n_init as usize, &events);
        assert_equivalent_and_clean(&config, &stim, &[], 1 + index as u64, &format!("sweep[{index}]"));
    }
}

#[test]
fn engines_agree_across_suite_on_one_config() {
    let config = sweep_config(4); // T2, 2x3, latency-based, full crossbar
    for test in suite() {
        if !test.applicable(&config) {
            continue;
        }
        let constraints = test.instantiate(&config);
        let events = gen_traffic(99, &constraints, &config, 150).expect("traffic");
        let stim = Stimulus::from_events(config.n_init as usize, &events);
        let schedule = test.priority_schedule(&config);
        assert_equivalent_and_clean(&config, &stim, &schedule, 99, test.id);
    }
}

#[test]
fn reprogram_applies_at_cycle_boundary() {
    let mut config = sweep_config(1);
    config.arb_policy = ArbPolicy::ProgrammablePriority;
    config.priority_vector = vec![0; config.n_init as usize];
    let mut constraints = stbusv::verif::TrafficConstraints::uniform(config.n_init as usize);
    constraints.inter_arrival = (0, 0);
    let events = gen_traffic(5, &constraints, &config, 120).expect("traffic");
    let stim = Stimulus::from_events(config.n_init as usize, &events);
    let n = u64::from(config.n_init);
    let schedule = vec![(40u64, (0..n).rev().collect::<Vec<u64>>())];
    assert_equivalent_and_clean(&config, &stim, &schedule, 5, "reprogram");
}

#[test]
fn determinism_across_runs() {
    let config = sweep_config(7);
    let constraints = stbusv::verif::TrafficConstraints::uniform(config.n_init as usize);
    let events = gen_traffic(3, &constraints, &config, 100).expect("traffic");
    let stim = Stimulus::from_events(config.n_init as usize, &events);
    let a = ca_run(&config, &stim, &[], 3, 100_000).expect("run");
    let b = ca_run(&config, &stim, &[], 3, 100_000).expect("run");
    assert_eq!(a.traces, b.traces);
    let c = bca_run(&config, &stim, &[], 3, 100_000).expect("run");
    let d = bca_run(&config, &stim, &[], 3, 100_000).expect("run");
    assert_eq!(c.traces, d.traces);
}

#[test]
fn pipe_bound_is_respected() {
    let config = sweep_config(9); // pipe 5 unless T1
    let mut constraints = stbusv::verif::TrafficConstraints::uniform(config.n_init as usize);
    constraints.inter_arrival = (0, 0);
    let events = gen_traffic(8, &constraints, &config, 150).expect("traffic");
    let stim = Stimulus::from_events(config.n_init as usize, &events);
    let out = ca_run(&config, &stim, &[], 8, 100_000).expect("run");
    let pipe = config.effective_pipe() as i64;
    for trace in out.traces.iter().filter(|t| t.name.starts_with("init")) {
        let mut outstanding = 0i64;
        let mut in_req = false;
        for sig in &trace.cycles {
            if sig.r_req && sig.r_gnt && sig.r_eop {
                outstanding -= 1;
            }
            if sig.req && sig.gnt {
                if !in_req {
                    outstanding += 1;
                    assert!(outstanding <= pipe, "pipe bound exceeded at {}", trace.name);
                }
                in_req = !sig.eop;
            }
        }
    }
}

#[test]
fn all_idle_record_is_default() {
    // finalize_traces depends on idle records comparing equal to default.
    assert_eq!(PortSignals::default(), PortSignals::default());
}

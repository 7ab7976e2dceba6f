//! Batch execution: one (config, test, seed, model) run, and the full
//! matrix over a config directory with automatic alignment analysis.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analyzer::{compare, AlignmentReport, AnalyzerError};
use crate::interconnect::{bca_run, ca_run, NodeConfig, Stimulus};
use crate::vcdio::{parse_vcd, write_vcd, VcdError};
use crate::verif::{
    check_protocol, gen_traffic, monitor_extract, scoreboard_check, CoverageModel, CoverageReport,
    MonitorTxn, ScoreboardVerdict, VerifError, Violation,
};

use super::config::{load_config, ConfigLoadError};
use super::suite::{find_test, suite, TestCase};

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] ConfigLoadError),
    #[error(transparent)]
    Verif(#[from] VerifError),
    #[error("protocol error: {0}")]
    Protocol(#[from] crate::protocol::ProtocolError),
    #[error(transparent)]
    Vcd(#[from] VcdError),
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
    #[error("unknown test id {0}")]
    UnknownTest(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Model {
    Ca,
    Bca,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::Ca => "ca",
            Model::Bca => "bca",
        }
    }

    pub fn parse(s: &str) -> Option<Model> {
        match s.to_lowercase().as_str() {
            "ca" => Some(Model::Ca),
            "bca" => Some(Model::Bca),
            _ => None,
        }
    }
}

/// Everything that identifies one run; outputs are a pure function of it.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: NodeConfig,
    pub config_name: String,
    pub test_id: String,
    pub seed: u64,
    pub model: Model,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: String,
    pub test: String,
    pub seed: u64,
    pub model: Model,
    pub txn_count: u64,
    pub total_cycles: u64,
    pub violations: Vec<Violation>,
    pub scoreboard: ScoreboardVerdict,
    pub coverage: CoverageReport,
    pub vcd_path: PathBuf,
    #[serde(skip)]
    pub wall_ms: u128,
    #[serde(skip)]
    pub txns: Vec<MonitorTxn>,
    #[serde(skip)]
    pub coverage_model: CoverageModel,
}

impl RunReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty() && self.scoreboard.passed()
    }
}

/// Runs one test on one engine: generate, simulate, monitor, check, score,
/// cover, and write the VCD plus reports under
/// `out_dir/<model>/<test>/<seed>/`.
pub fn run_test(spec: &RunSpec) -> Result<RunReport, RegressError> {
    let started = Instant::now();
    let test = find_test(&spec.test_id).ok_or_else(|| RegressError::UnknownTest(spec.test_id.clone()))?;
    let config = &spec.config;

    let txn_budget = config.txn_budget_cap.map_or(test.txn_budget, |c| c.min(test.txn_budget));
    let cycle_budget =
        config.cycle_budget_cap.map_or(test.cycle_budget, |c| c.min(test.cycle_budget));

    let constraints = test.instantiate(config);
    let events = gen_traffic(spec.seed, &constraints, config, txn_budget)?;
    let stimulus = Stimulus::from_events(config.n_init as usize, &events);
    let schedule = if config.arb_policy == crate::interconnect::ArbPolicy::ProgrammablePriority {
        test.priority_schedule(config)
    } else {
        Vec::new()
    };

    let outcome = match spec.model {
        Model::Ca => ca_run(config, &stimulus, &schedule, spec.seed, cycle_budget)?,
        Model::Bca => bca_run(config, &stimulus, &schedule, spec.seed, cycle_budget)?,
    };

    let mut violations = Vec::new();
    let mut txns = Vec::new();
    for trace in &outcome.traces {
        violations.extend(check_protocol(trace, config.protocol, config.pipe_size));
        txns.extend(monitor_extract(trace, config.endianness));
    }
    let scoreboard = scoreboard_check(&txns, config);
    let mut coverage_model = CoverageModel::new(config);
    coverage_model.sample_run(config, &txns);
    let coverage = coverage_model.report();

    let run_dir = spec
        .out_dir
        .join(spec.model.as_str())
        .join(&spec.test_id)
        .join(spec.seed.to_string());
    fs::create_dir_all(&run_dir)?;
    let vcd_path = run_dir.join("trace.vcd");
    write_vcd(&outcome.traces, config.clock_period_ns, &vcd_path)?;

    let report = RunReport {
        config: spec.config_name.clone(),
        test: spec.test_id.clone(),
        seed: spec.seed,
        model: spec.model,
        txn_count: txn_budget,
        total_cycles: outcome.total_cycles,
        violations,
        scoreboard,
        coverage,
        vcd_path: vcd_path.clone(),
        wall_ms: started.elapsed().as_millis(),
        txns,
        coverage_model,
    };
    fs::write(run_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(run_dir.join("report.txt"), render_run_text(&report))?;
    fs::write(
        run_dir.join("coverage.json"),
        serde_json::to_string_pretty(&report.coverage)?,
    )?;
    Ok(report)
}

fn render_run_text(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "run {} / {} / seed {} / {}\n",
        report.config,
        report.test,
        report.seed,
        report.model.as_str()
    ));
    out.push_str(&format!(
        "cycles {}  transactions {}\n",
        report.total_cycles, report.txn_count
    ));
    if report.violations.is_empty() {
        out.push_str("protocol checks: clean\n");
    } else {
        out.push_str(&format!("protocol checks: {} violations\n", report.violations.len()));
        for v in &report.violations {
            out.push_str(&format!("  {} @ {} cycle {}: {}\n", v.rule, v.port, v.cycle, v.message));
        }
    }
    match &report.scoreboard {
        ScoreboardVerdict::Pass => out.push_str("scoreboard: PASS\n"),
        ScoreboardVerdict::Fail(details) => {
            out.push_str("scoreboard: FAIL\n");
            for d in details {
                out.push_str(&format!("  {d}\n"));
            }
        }
    }
    out.push_str(&format!(
        "coverage: {:.1}% ({}/{} bins)\n",
        report.coverage.percent, report.coverage.hit_bins, report.coverage.total_bins
    ));
    out
}

impl From<serde_json::Error> for RegressError {
    fn from(e: serde_json::Error) -> Self {
        RegressError::Other(format!("serialization failed: {e}"))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixRow {
    pub config: String,
    pub test: String,
    pub seed: u64,
    pub skipped: bool,
    pub ca_clean: bool,
    pub bca_clean: bool,
    pub coverage_percent: f64,
    pub coverage_identical: bool,
    pub min_alignment: Option<f64>,
    pub first_divergence: Option<(String, u64)>,
    pub signoff: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigCoverage {
    pub config: String,
    pub merged: CoverageReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixSummary {
    pub rows: Vec<MatrixRow>,
    pub per_config_coverage: Vec<ConfigCoverage>,
    pub all_pass: bool,
}

impl MatrixSummary {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "config                 test seed chk  coverage  min-align signoff\n",
        );
        for r in &self.rows {
            if r.skipped {
                out.push_str(&format!(
                    "{:<22} {:<4} {:>4} SKIP (policy-conditional test)\n",
                    r.config, r.test, r.seed
                ));
                continue;
            }
            out.push_str(&format!(
                "{:<22} {:<4} {:>4} {}  {:>7.1}%  {}   {}\n",
                r.config,
                r.test,
                r.seed,
                if r.ca_clean && r.bca_clean { "ok " } else { "BAD" },
                r.coverage_percent,
                r.min_alignment.map_or(" -      ".into(), |m| format!("{m:.6}")),
                match r.signoff {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "n/a",
                },
            ));
        }
        for c in &self.per_config_coverage {
            out.push_str(&format!(
                "coverage[{}] = {:.1}% ({}/{})\n",
                c.config, c.merged.percent, c.merged.hit_bins, c.merged.total_bins
            ));
        }
        out.push_str(&format!("matrix verdict: {}\n", if self.all_pass { "PASS" } else { "FAIL" }));
        out
    }
}

/// Enumerates `.cfg` files of a directory in name order.
pub fn list_configs(config_dir: &Path) -> Result<Vec<(String, NodeConfig)>, RegressError> {
    let mut files: Vec<PathBuf> = fs::read_dir(config_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(RegressError::Other(format!(
            "no .cfg files found in {}",
            config_dir.display()
        )));
    }
    files
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, load_config(&p)?))
        })
        .collect()
}

/// Runs every (config, test, seed) cell on both engines with shared seeds,
/// then compares the VCD pair and applies the sign-off rule. Cells run in
/// parallel; the summary is assembled in deterministic order.
pub fn run_matrix(
    config_dir: &Path,
    tests: &[String],
    seeds_per_test: u64,
    jobs: usize,
    out_dir: &Path,
    threshold: f64,
) -> Result<MatrixSummary, RegressError> {
    let configs = list_configs(config_dir)?;
    let all_tests = suite();
    let selected: Vec<&TestCase> = if tests.is_empty() {
        all_tests.iter().collect()
    } else {
        let mut picked = Vec::new();
        for id in tests {
            picked.push(
                all_tests
                    .iter()
                    .find(|t| t.id == id.as_str())
                    .ok_or_else(|| RegressError::UnknownTest(id.clone()))?,
            );
        }
        picked
    };

    let mut cells = Vec::new();
    for (name, config) in &configs {
        for test in &selected {
            for seed in 1..=seeds_per_test {
                cells.push((name.clone(), config.clone(), (*test).clone(), seed));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RegressError::Other(format!("worker pool: {e}")))?;
    let results: Vec<Result<(MatrixRow, Option<CoverageModel>), RegressError>> =
        pool.install(|| {
            cells
                .par_iter()
                .map(|(name, config, test, seed)| {
                    run_cell(name, config, test, *seed, out_dir, threshold)
                })
                .collect()
        });

    let mut rows = Vec::with_capacity(results.len());
    let mut coverage: Vec<ConfigCoverage> = Vec::new();
    let mut merged: std::collections::BTreeMap<String, CoverageModel> =
        std::collections::BTreeMap::new();
    for result in results {
        let (row, model) = result?;
        if let Some(model) = model {
            match merged.get_mut(&row.config) {
                Some(m) => m.merge(&model),
                None => {
                    merged.insert(row.config.clone(), model);
                }
            }
        }
        rows.push(row);
    }
    for (config, model) in merged {
        coverage.push(ConfigCoverage { config, merged: model.report() });
    }

    let all_pass = rows.iter().all(|r| {
        r.skipped || (r.ca_clean && r.bca_clean && r.signoff == Some(true) && r.coverage_identical)
    });
    let summary = MatrixSummary { rows, per_config_coverage: coverage, all_pass };
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(out_dir.join("summary.txt"), summary.render_text())?;
    Ok(summary)
}

fn run_cell(
    name: &str,
    config: &NodeConfig,
    test: &TestCase,
    seed: u64,
    out_dir: &Path,
    threshold: f64,
) -> Result<(MatrixRow, Option<CoverageModel>), RegressError> {
    if !test.applicable(config) {
        return Ok((
            MatrixRow {
                config: name.to_string(),
                test: test.id.to_string(),
                seed,
                skipped: true,
                ca_clean: false,
                bca_clean: false,
                coverage_percent: 0.0,
                coverage_identical: true,
                min_alignment: None,
                first_divergence: None,
                signoff: None,
            },
            None,
        ));
    }
    let cell_out = out_dir.join(name);
    let mut spec = RunSpec {
        config: config.clone(),
        config_name: name.to_string(),
        test_id: test.id.to_string(),
        seed,
        model: Model::Ca,
        out_dir: cell_out.clone(),
    };
    let ca = run_test(&spec)?;
    spec.model = Model::Bca;
    let bca = run_test(&spec)?;

    let coverage_identical = ca.coverage == bca.coverage;
    // Alignment analysis runs only once both runs come back clean, mirroring
    // the flow of gating bus-accurate comparison on checker results.
    let (min_alignment, first_divergence, signoff) = if ca.clean() && bca.clean() {
        let db_a = parse_vcd(&ca.vcd_path)?;
        let db_b = parse_vcd(&bca.vcd_path)?;
        let report: AlignmentReport =
            compare(&db_a, &db_b, config.clock_period_ns, None, threshold)?;
        let diverged = report
            .ports
            .iter()
            .filter_map(|p| p.first_divergence.map(|c| (p.port.clone(), c)))
            .min_by_key(|(_, c)| *c);
        fs::write(
            cell_out.join(format!("align_{}_{}.json", test.id, seed)),
            serde_json::to_string_pretty(&report)?,
        )?;
        (Some(report.min_rate), diverged, Some(report.pass))
    } else {
        (None, None, Some(false))
    };

    Ok((
        MatrixRow {
            config: name.to_string(),
            test: test.id.to_string(),
            seed,
            skipped: false,
            ca_clean: ca.clean(),
            bca_clean: bca.clean(),
            coverage_percent: ca.coverage.percent,
            coverage_identical,
            min_alignment,
            first_divergence,
            signoff,
        },
        Some(ca.coverage_model),
    ))
}


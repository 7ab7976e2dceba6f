use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stbusv::analyzer::{compare, signoff, DEFAULT_SIGNOFF_THRESHOLD};
use stbusv::regress::{load_config, run_matrix, run_test, suite, Model, RunSpec};
use stbusv::vcdio::parse_vcd;

#[derive(Parser)]
#[command(name = "stbusv", about = "Dual-view bus node simulator and verification environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one test on one engine and write its VCD and reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Test id (t01..t12).
        #[arg(long)]
        test: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Engine: ca or bca.
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full suite over every config of a directory, both engines,
    /// shared seeds, with automatic alignment sign-off per cell.
    Regress {
        #[arg(long = "config-dir")]
        config_dir: PathBuf,
        /// Seeds per test (1..=k).
        #[arg(long, default_value_t = 4)]
        seeds: u64,
        #[arg(long, default_value_t = num_threads())]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to specific test ids.
        #[arg(long)]
        tests: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_SIGNOFF_THRESHOLD)]
        threshold: f64,
    },
    /// Compare two VCD files port by port and render the sign-off verdict.
    Analyze {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 10)]
        period: u64,
        #[arg(long, default_value_t = DEFAULT_SIGNOFF_THRESHOLD)]
        threshold: f64,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Describe the test suite.
    Suite {
        #[arg(long)]
        list: bool,
    },
}

fn num_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn main() -> ExitCode {
    match run() {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<bool, Box<dyn std::error::Error>> {
    match Cli::parse().command {
        Command::Run { config, test, seed, model, out } => {
            let model = Model::parse(&model).ok_or("model must be ca or bca")?;
            let node = load_config(&config)?;
            let name = config
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "config".into());
            let report = run_test(&RunSpec {
                config: node,
                config_name: name,
                test_id: test,
                seed,
                model,
                out_dir: out,
            })?;
            println!(
                "{} violations, scoreboard {}, coverage {:.1}%, {} cycles, vcd at {}",
                report.violations.len(),
                if report.scoreboard.passed() { "PASS" } else { "FAIL" },
                report.coverage.percent,
                report.total_cycles,
                report.vcd_path.display(),
            );
            Ok(report.clean())
        }
        Command::Regress { config_dir, seeds, jobs, out, tests, threshold } => {
            let summary = run_matrix(&config_dir, &tests, seeds, jobs, &out, threshold)?;
            print!("{}", summary.render_text());
            println!("summary written to {}", out.join("summary.txt").display());
            Ok(summary.all_pass)
        }
        Command::Analyze { a, b, period, threshold, report } => {
            let db_a = parse_vcd(&a)?;
            let db_b = parse_vcd(&b)?;
            let result = compare(&db_a, &db_b, period, None, threshold)?;
            print!("{}", result.render_text());
            if let Some(path) = report {
                std::fs::write(&path, serde_json::to_string_pretty(&result)?)?;
            }
            Ok(signoff(&result, threshold))
        }
        Command::Suite { list: _ } => {
            for test in suite() {
                let gate = test
                    .only_for_arb
                    .map(|p| format!(" [only {}]", p.as_str()))
                    .unwrap_or_default();
                println!("{}  {}{}", test.id, test.description, gate);
            }
            Ok(true)
        }
    }
}

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use activecrowd::crowd::{pba_allocate, uniform_allocation, PbaAllocation, PbaConfig};
use activecrowd::error::Result;
use activecrowd::harness::{self, synth, ExperimentConfig, SynthKind};

#[derive(Parser)]
#[command(name = "activecrowd", version, about = "Active learning with a noisy crowd")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and persist the results.
    Run { config: PathBuf },
    /// Compare learning curves of a persisted run.
    Report {
        store: PathBuf,
        /// Comma separated baseline:method pairs. Defaults to baseline
        /// against every other ranker.
        #[arg(long)]
        pairs: Option<String>,
        /// Output directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as CSV.
    GenSynth {
        kind: SynthKind,
        n: usize,
        seed: u64,
        out: PathBuf,
    },
    /// Solve a vote allocation instance and print it as JSON.
    PbaSolve { instance: PathBuf },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Instance {
    max_votes: u32,
    vote_budget: u64,
    groups: Vec<InstanceGroup>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceGroup {
    id: u32,
    accuracy: f64,
    items: u64,
}

#[derive(Serialize)]
struct Solution {
    optimal: PbaAllocation,
    uniform: PbaAllocation,
}

fn pba_solve(path: &PathBuf) -> Result<()> {
    let inst: Instance = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let config = PbaConfig {
        max_votes: inst.max_votes,
        vote_budget: inst.vote_budget,
        ..PbaConfig::default()
    };
    let p: BTreeMap<u32, f64> = inst.groups.iter().map(|g| (g.id, g.accuracy)).collect();
    let f: BTreeMap<u32, u64> = inst.groups.iter().map(|g| (g.id, g.items)).collect();
    let solution = Solution {
        optimal: pba_allocate(&config, &p, &f)?,
        uniform: uniform_allocation(&config, &p, &f)?,
    };
    println!("{}", serde_json::to_string_pretty(&solution)?);
    Ok(())
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let store = harness::run_experiment(&config)?;
            let dir = harness::persist(&store, &config)?;
            for cell in store.failures() {
                eprintln!(
                    "cell {} b={} r={} failed: {}",
                    cell.ranker,
                    cell.budget,
                    cell.repetition,
                    cell.error.as_deref().unwrap_or_default()
                );
            }
            println!("{}", dir.display());
            Ok(store.is_complete())
        }
        Command::Report { store, pairs, out } => {
            let loaded = harness::load_store(&store)?;
            let pairings = match pairs {
                Some(p) => harness::parse_pairings(&p)?,
                None => harness::default_pairings(&loaded),
            };
            let report = harness::emit_report(&loaded, &pairings, out.as_ref().unwrap_or(&store))?;
            for row in &report.comparisons {
                let saved = row.questions_saved.as_f64().map_or("undefined".into(), |s| format!("{s:.4}"));
                println!(
                    "{} vs {}: auc {:.4} auclog {:.4} saved {saved}",
                    row.method, row.baseline, row.auc_ratio, row.auclog_ratio
                );
            }
            Ok(loaded.is_complete())
        }
        Command::GenSynth { kind, n, seed, out } => {
            synth::write_csv(&synth::generate(kind, n, seed)?, &out)?;
            Ok(true)
        }
        Command::PbaSolve { instance } => pba_solve(&instance).map(|_| true),
    }
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for partial failure, so usage errors use 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

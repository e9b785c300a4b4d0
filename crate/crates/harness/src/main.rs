use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use graphsync_harness::experiments::{self, Experiment, Params};
use graphsync_harness::output::RunOutput;
use graphsync_harness::scenario::{run_scenario, Scenario};
use graphsync_harness::verify::verify;

#[derive(Parser)]
#[command(name = "graphsync", about = "Simulated experiments for RDF graph synchronization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSVs and manifest.
    Run {
        /// merge-scaling, rebase-scaling, partition-12, max-rate, never-sync,
        /// collab-mapping or transfer-fuzz
        experiment: Experiment,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        docs: Option<usize>,
        #[arg(long)]
        changes: Option<usize>,
        #[arg(long)]
        revisions: Option<usize>,
        /// Fuzz iterations (transfer-fuzz).
        #[arg(long)]
        runs: Option<usize>,
        /// Timing repetitions per measurement (scaling experiments).
        #[arg(long)]
        reps: Option<usize>,
        /// Link loss probability override.
        #[arg(long)]
        loss: Option<f64>,
        /// Disable partition windows (partition-12).
        #[arg(long)]
        no_partitions: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-check a run directory offline.
    Verify { path: PathBuf },
    /// Run a scenario file.
    Scenario {
        file: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn finish(output: &RunOutput, dir: &PathBuf) -> Result<ExitCode> {
    output.write(dir)?;
    print!("{}", output.summary());
    println!("wrote {}", dir.display());
    Ok(if output.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            experiment,
            seed,
            agents,
            docs,
            changes,
            revisions,
            runs,
            reps,
            loss,
            no_partitions,
            out,
        } => {
            let params = Params {
                agents,
                docs,
                changes,
                revisions,
                runs,
                reps,
                loss,
                no_partitions,
                ..Params::new(seed)
            };
            let output = experiments::run(experiment, &params)?;
            finish(&output, &out)
        }
        Command::Verify { path } => {
            let report = verify(&path);
            println!("{report}");
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Scenario { file, out } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let scenario = Scenario::parse(&text)?;
            finish(&run_scenario(&scenario)?, &out)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nanoaperture_sim::runner::{run_scenario, RunOptions};
use nanoaperture_sim::scenario::{Scenario, Task};

#[derive(Parser)]
#[command(version, about = "Two-photon helicity states through a nanoaperture")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Conditional two-qubit states and their metrics as JSON.
    Prepare(Common),
    /// Normalized cross-circular coincidence rate against delay.
    HomScan(Common),
    /// Simulated counts, maximum-likelihood reconstruction and bootstrap errors.
    Tomography(Common),
    /// HOM visibilities over jittered apertures.
    ApertureSweep(Common),
    /// Analytic metrics table.
    Metrics(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of repetitions per HOM point.
    #[arg(long)]
    repeats: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::Prepare(a) => (Task::Prepare, a),
        Command::HomScan(a) => (Task::HomScan, a),
        Command::Tomography(a) => (Task::Tomography, a),
        Command::ApertureSweep(a) => (Task::ApertureSweep, a),
        Command::Metrics(a) => (Task::Metrics, a),
    };
    let options = RunOptions { out: args.out, seed: args.seed, repeats: args.repeats };
    let result = Scenario::load(&args.scenario).and_then(|s| run_scenario(task, s, &options));
    match result {
        Ok(outcome) => {
            for w in &outcome.manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", outcome.out_dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

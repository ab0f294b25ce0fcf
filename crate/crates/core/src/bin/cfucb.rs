use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cfucb::harness::check::{run_checks, Suite};
use cfucb::harness::output::write_outputs;
use cfucb::harness::{run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "cfucb",
    version,
    about = "Counterfactual-UCB simulation laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write regret.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `base_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write per-replication pull logs and arrival streams.
        #[arg(long)]
        logs: bool,
        /// Run replications on one thread.
        #[arg(long)]
        serial: bool,
    },
    /// Run numerical verification suites and print a JSON report.
    Check {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> cfucb::Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            logs,
            serial,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut config = ExperimentConfig::from_toml_str(&text)?;
            if let Some(s) = seed {
                config.base_seed = s;
            }
            if serial {
                config.parallel = false;
            }
            let result = run_experiment(&config, logs)?;
            write_outputs(&result, &out)?;
            let s = &result.summary;
            eprintln!(
                "{} replications of {} events; final regret opted-in {:.3}, opted-out {:.3}",
                s.replications, s.events, s.final_regret.opted_in, s.final_regret.opted_out
            );
            Ok(true)
        }
        Command::Check { suite, seed } => {
            let suites = Suite::parse_selection(&suite)?;
            let report = run_checks(&suites, seed);
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report is always serializable")
            );
            Ok(report.passed)
        }
    }
}

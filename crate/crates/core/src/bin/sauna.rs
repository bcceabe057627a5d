use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sauna::env::ENV_NAMES;
use sauna::harness::{compare, plot_data, run_experiment, run_suite, ExperimentConfig, RunOutcome};

#[derive(Parser)]
#[command(name = "sauna", version, about = "Train and compare filtered PPO agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of one configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a configuration key, e.g. `--set rho=0.5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare the final performance of two runs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Print CSV instead of a text table.
        #[arg(long)]
        csv: bool,
    },
    /// Export one metric of several runs as plot-ready CSV.
    Export {
        #[arg(long)]
        metric: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Run a predefined experiment grid.
    Suite {
        /// Suite name; only `paper-suite` exists.
        name: String,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to these environments.
        #[arg(long = "env")]
        envs: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn report(outcomes: &[RunOutcome]) -> bool {
    let mut ok = true;
    for run in outcomes {
        for s in &run.seeds {
            match &s.error {
                None => eprintln!("{}: seed {} done, {} updates", run.dir.display(), s.seed, s.updates),
                Some(e) => {
                    ok = false;
                    eprintln!("{}: seed {} FAILED after {} updates: {e}", run.dir.display(), s.seed, s.updates);
                }
            }
        }
    }
    ok
}

fn run(cli: Cli) -> sauna::Result<bool> {
    match cli.command {
        Command::Train { config, overrides } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            for o in &overrides {
                cfg.apply_override(o)?;
            }
            Ok(report(&[run_experiment(&cfg)?]))
        }
        Command::Compare { a, b, csv } => {
            let table = compare(&a, &b)?;
            if csv {
                print!("{}", table.to_csv()?);
            } else {
                print!("{table}");
            }
            Ok(true)
        }
        Command::Export { metric, out, dirs } => {
            let (long, summary) = plot_data(&metric, &dirs)?.write(&out, &metric)?;
            println!("{}\n{}", long.display(), summary.display());
            Ok(true)
        }
        Command::Suite {
            name,
            out,
            envs,
            overrides,
        } => {
            if name != "paper-suite" {
                return Err(sauna::Error::Usage(format!(
                    "unknown suite {name:?}; available: paper-suite"
                )));
            }
            let envs: Vec<&str> = if envs.is_empty() {
                ENV_NAMES.to_vec()
            } else {
                envs.iter().map(String::as_str).collect()
            };
            Ok(report(&run_suite(&out, &envs, &overrides)?))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmpc_cli::scenario::{csv_path, run_to_files, summary_path, sweep_table};
use cmpc_cli::{run_scenario, run_sweep, selftest, ScenarioConfig};

/// Multi-rate C-MPC scenario runner.
#[derive(Parser)]
#[command(name = "cmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes <out>.csv and <out>.summary.json.
    Run {
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario at each (alpha, beta) pair (zipped).
    Sweep {
        config: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        alphas: Vec<f64>,
        #[arg(long, num_args = 1.., required = true)]
        betas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized property checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Exit codes: 0 success, 1 error, 2 run stopped early (hard planner
/// failure or divergence) or a failed check.
fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let outcome = match out.or_else(|| cfg.output.clone()) {
                Some(path) => {
                    let o = run_to_files(&cfg, &path)?;
                    eprintln!("wrote {} and {}", csv_path(&path).display(), summary_path(&path).display());
                    o
                }
                None => run_scenario(&cfg)?,
            };
            println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
            Ok(if outcome.summary.completed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Sweep { config, alphas, betas, out } => {
            if alphas.len() != betas.len() {
                return Err("--alphas and --betas must have the same length".into());
            }
            let cfg = ScenarioConfig::load(&config)?;
            let pairs: Vec<_> = alphas.into_iter().zip(betas).collect();
            let out = out.or_else(|| cfg.output.clone());
            let rows = run_sweep(&cfg, &pairs, out.as_deref())?;
            print!("{}", sweep_table(&rows));
            let all_ok = rows.iter().all(|r| r.summary.as_ref().is_some_and(|s| s.completed()));
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Selftest { seed } => {
            let checks = selftest::run_selftest(seed);
            for c in &checks {
                println!("{c}");
            }
            Ok(if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

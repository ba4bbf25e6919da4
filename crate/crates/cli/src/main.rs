use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use landing_core::diagnostics::{run_suite, Suite, VerifyHooks};
use landing_core::harness::{gen_data, parse_config, run_experiment, run_grid, INDEX_FILE};

/// Benchmark harness for landing optimizers on the Stiefel manifold.
#[derive(Parser)]
#[command(name = "landing", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config; writes a CSV trace and a JSON summary.
    Run {
        config: PathBuf,
        /// Override the config's output CSV path.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run every *.toml config in a directory.
    Grid {
        dir: PathBuf,
        #[arg(short, long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run a property suite: geometry, merit, descent or oracle.
    Verify {
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale every safeguard step (negative control when > 1).
        #[arg(long, default_value_t = 1.0)]
        eta_scale: f64,
        /// Scale μ relative to its lower bound (negative control when < 1).
        #[arg(long, default_value_t = 1.0)]
        mu_scale: f64,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate a synthetic instance, e.g. `pca:n=50,p=5,N=500,sigma=0.1,seed=1`.
    GenData {
        spec: String,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LANDING_LOG", "warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> landing_core::Result<bool> {
    match cmd {
        Command::Run { config, output } => {
            let mut cfg = parse_config(&config)?;
            if output.is_some() {
                cfg.output_path = output;
            }
            let summary = run_experiment(&cfg)?;
            if let (Some(last), Some(path)) = (&summary.final_record, &summary.csv_path) {
                println!(
                    "{}: {} iterations, f = {:.10e}, ‖grad f‖² = {:.3e}, N(X) = {:.3e}",
                    path.display(),
                    last.iter,
                    last.f_value,
                    last.grad_norm_sq,
                    last.n_of_x
                );
            }
            Ok(true)
        }
        Command::Grid { dir, jobs } => {
            let index = run_grid(&dir, jobs)?;
            for run in &index.runs {
                match &run.error {
                    None => println!("ok     {}", run.config.display()),
                    Some(e) => println!("FAILED {}: {e}", run.config.display()),
                }
            }
            println!(
                "{} runs, {} failed; index at {}",
                index.runs.len(),
                index.failed,
                dir.join(INDEX_FILE).display()
            );
            Ok(index.success())
        }
        Command::Verify {
            suite,
            seed,
            eta_scale,
            mu_scale,
            json,
        } => {
            let report = run_suite(suite, seed, VerifyHooks { eta_scale, mu_scale })?;
            for p in &report.properties {
                println!("{}", p.summary_line());
            }
            println!("suite {suite}: {}", if report.passed { "PASS" } else { "FAIL" });
            if let Some(path) = json {
                std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            Ok(report.passed)
        }
        Command::GenData { spec, output } => {
            gen_data(&spec, &output)?;
            println!("wrote {}", output.display());
            Ok(true)
        }
    }
}

//! `zk` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use zk_core::config::{parse_config, RunConfig};
use zk_core::error::{EXIT_BLOWUP, EXIT_CONFIG};
use zk_core::experiments::{bvp_experiment, mms, run_experiment, sweep_eps, verify};
use zk_core::io::OutputLayout;
use zk_core::stepper::RunStatus;
use zk_core::{Result, ZkError};

/// Regularized Zakharov-Kuznetsov solver and verification harness.
#[derive(Parser, Debug)]
#[command(name = "zk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's `[output] dir`, then `$ZK_OUT`, then `zk-out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-mode solves and sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Seed for randomized drivers; PDE runs are deterministic and ignore it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// One trajectory.
    Run,
    /// Limit study over `[sweep] epsilons`.
    SweepEps,
    /// Two-point boundary-value problem and its epsilon sweep.
    Bvp,
    /// Balance, identity and estimate checks on one trajectory.
    Verify,
    /// Manufactured-solution refinement ladder.
    Mms,
}

fn print_json(v: &impl Serialize) {
    match serde_json::to_string_pretty(v) {
        Ok(s) => println!("{s}"),
        Err(e) => eprintln!("zk: cannot render report: {e}"),
    }
}

fn guard_code(stopped: bool) -> i32 {
    if stopped {
        EXIT_BLOWUP
    } else {
        0
    }
}

fn execute(cli: &Cli, cfg: &RunConfig) -> Result<i32> {
    let root = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os("ZK_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("zk-out"));
    let layout = OutputLayout::create(root)?;
    let out = Some(&layout);
    Ok(match cli.command {
        Command::Run => {
            let r = run_experiment(cfg, out)?;
            print_json(&r.summary);
            guard_code(r.summary.status != RunStatus::Completed)
        }
        Command::SweepEps => {
            let (r, _) = sweep_eps(cfg, out)?;
            print_json(&r);
            guard_code(r.members.iter().any(|m| !m.completed))
        }
        Command::Bvp => {
            print_json(&bvp_experiment(cfg, out)?);
            0
        }
        Command::Verify => {
            let r = verify(cfg, out)?;
            print_json(&r);
            guard_code(r.status != RunStatus::Completed)
        }
        Command::Mms => {
            let r = mms(cfg, out)?;
            for row in &r.rows {
                let order = row.order.map_or("-".to_string(), |o| format!("{o:.3}"));
                println!(
                    "eps={:e} nx={} dt={:e} error={:e} order={order}",
                    row.epsilon, row.nx, row.dt, row.error
                );
            }
            0
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config.as_ref() else {
        eprintln!("zk: --config <path> is required");
        return ExitCode::from(EXIT_CONFIG as u8);
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("zk: cannot configure thread pool: {e}");
    }
    let code = std::fs::read_to_string(path)
        .map_err(|e| ZkError::Config(format!("cannot read {}: {e}", path.display())))
        .and_then(|text| parse_config(&text))
        .and_then(|cfg| execute(&cli, &cfg));
    match code {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("zk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

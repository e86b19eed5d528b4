//! `vimp`: solve, differentiate and optimize impulsive Volterra control problems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;
mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use volterra_impulse::linear::LinearMode;

use commands::{GradientMode, OptimizeArgs, Outcome};
use config::{input_kind, Config};

#[derive(Parser)]
#[command(name = "vimp", version, about)]
struct Cli {
    /// Directory for output artifacts.
    #[arg(long, default_value = "vimp-out")]
    out: PathBuf,
    /// Points per interval; overrides the config.
    #[arg(long)]
    ppi: Option<usize>,
    /// Forward-solver and resolvent tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinearModeArg {
    Direct,
    #[value(name = "path_boundary")]
    PathBoundary,
    Resolvent,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradientModeArg {
    Direct,
    Adjoint,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the state equation; writes trajectory.csv and summary.json.
    Solve { config: PathBuf },
    /// Solve the linearized system by one or all methods.
    Linear {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        mode: LinearModeArg,
    },
    /// Directional derivatives along each unit control direction.
    Gradient {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "adjoint")]
        mode: GradientModeArg,
    },
    /// Test the first-order optimality conditions at the configured policy.
    CheckOptimality {
        config: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        stationarity_tol: f64,
    },
    /// Projected gradient descent, optionally cross-checked by grid enumeration.
    Optimize {
        config: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        /// Stationarity tolerance for stopping.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        enumerate_grid: Option<usize>,
    },
    /// Compare the Volterra co-state with the ODE co-state.
    OdeVerify { config: PathBuf },
    /// Run every consistency check.
    Verify { config: PathBuf },
}

pub struct Settings {
    pub out: PathBuf,
    pub tol: f64,
    pub seed: u64,
}

impl Command {
    fn config(&self) -> &PathBuf {
        match self {
            Command::Solve { config }
            | Command::Linear { config, .. }
            | Command::Gradient { config, .. }
            | Command::CheckOptimality { config, .. }
            | Command::Optimize { config, .. }
            | Command::OdeVerify { config }
            | Command::Verify { config } => config,
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    if !(cli.tol > 0.0) {
        anyhow::bail!(config::InputError { kind: "invalid_flag", message: "--tol must be positive".into() });
    }
    let resolved = Config::load(cli.command.config())?.resolve(cli.ppi)?;
    let s = Settings { out: cli.out.clone(), tol: cli.tol, seed: cli.seed };
    match &cli.command {
        Command::Solve { .. } => commands::solve(&resolved, &s),
        Command::Linear { mode, .. } => {
            let modes: &[LinearMode] = match mode {
                LinearModeArg::Direct => &[LinearMode::Direct],
                LinearModeArg::PathBoundary => &[LinearMode::PathBoundary],
                LinearModeArg::Resolvent => &[LinearMode::Resolvent],
                LinearModeArg::All => &[LinearMode::Direct, LinearMode::PathBoundary, LinearMode::Resolvent],
            };
            commands::linear(&resolved, &s, modes)
        }
        Command::Gradient { mode, .. } => {
            let mode = match mode {
                GradientModeArg::Direct => GradientMode::Direct,
                GradientModeArg::Adjoint => GradientMode::Adjoint,
            };
            commands::gradient_cmd(&resolved, &s, mode)
        }
        Command::CheckOptimality { stationarity_tol, .. } => {
            commands::check_optimality(&resolved, &s, *stationarity_tol)
        }
        Command::Optimize { step, iters, tol, enumerate_grid, .. } => {
            let args = OptimizeArgs { step: *step, iters: *iters, tol: *tol, enumerate_grid: *enumerate_grid };
            commands::optimize(&resolved, &s, &args)
        }
        Command::OdeVerify { .. } => commands::ode_verify(&resolved, &s),
        Command::Verify { .. } => verify::verify(&resolved, &s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match run(&cli) {
        Ok(outcome) => {
            let _ = stdout.write_all(outcome.stdout.as_bytes());
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let kind = input_kind(&e).unwrap_or("numerical_failure");
            let body = serde_json::json!({ "error": format!("{e:#}"), "kind": kind });
            let _ = writeln!(stdout, "{body}");
            ExitCode::from(2)
        }
    }
}

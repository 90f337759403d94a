//! Command-line front end: experiment runs, ε-sweeps, PDE comparisons,
//! continuity probes and operator validation, with reproducible artifacts.

use bmmv::harness::{self, ExperimentConfig, RunMode};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bmmv",
    about = "Backward multivalued McKean-Vlasov SDE solver",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Path to a TOML config file.
    #[arg(value_name = "CONFIG", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset (see `--list-presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Override a config key: `--set penalization.eps=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides the config's `outputs`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Thread count for the worker pool (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Shorthand for --set penalization.eps=EPS.
    #[arg(long)]
    eps: Option<f64>,
    /// Shorthand for --set penalization.schedule=[..]: comma-separated list.
    #[arg(long = "eps-sweep", value_name = "E1,E2,..")]
    eps_sweep: Option<String>,
    /// Shorthand for --set picard.tol=TOL.
    #[arg(long = "picard-tol")]
    picard_tol: Option<f64>,
    /// Shorthand for --set basis.kind=KIND (polynomial | indicator_bins |
    /// indicator_distinct).
    #[arg(long)]
    basis: Option<String>,
    /// Shorthand for --set seed=SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// List available presets and exit.
    #[arg(long = "list-presets")]
    list_presets: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate forward, solve backward, write artifacts.
    Run(RunArgs),
    /// Run the solver across the configured ε schedule.
    SweepEpsilon(RunArgs),
    /// Compare the probabilistic value function against the FD oracle.
    ComparePde(RunArgs),
    /// Terminal-continuity ratio table.
    ProbeContinuity(RunArgs),
    /// Run the monotone-operator property suite.
    ValidateOperators {
        /// Random samples per operator kind.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, bmmv::Error> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => harness::presets::preset_config(name).ok_or_else(|| {
            bmmv::Error::Config(format!(
                "unknown preset {name:?}; valid presets: {}",
                harness::presets::preset_names().join(", ")
            ))
        })?,
        _ => {
            return Err(bmmv::Error::Config(
                "provide a config file or --preset".into(),
            ))
        }
    };
    let mut sets = Vec::new();
    if let Some(e) = args.eps {
        sets.push(format!("penalization.eps={e}"));
    }
    if let Some(s) = &args.eps_sweep {
        sets.push(format!("penalization.schedule=[{s}]"));
    }
    if let Some(t) = args.picard_tol {
        sets.push(format!("picard.tol={t}"));
    }
    if let Some(b) = &args.basis {
        sets.push(format!("basis.kind={b}"));
    }
    if let Some(s) = args.seed {
        sets.push(format!("seed={s}"));
    }
    sets.extend(args.sets.iter().cloned());
    cfg = cfg.with_overrides(&sets)?;
    if let Some(out) = &args.out {
        cfg.outputs = Some(out.display().to_string());
    }
    Ok(cfg)
}

fn execute(args: &RunArgs, mode: RunMode) -> Result<(), bmmv::Error> {
    if args.list_presets {
        for name in harness::presets::preset_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let cfg = load_config(args)?;
    let pool = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| bmmv::Error::Config(e.to_string()))?,
        None => rayon::ThreadPoolBuilder::new()
            .build()
            .map_err(|e| bmmv::Error::Config(e.to_string()))?,
    };
    let artifacts = pool.install(|| harness::run(&cfg, mode))?;
    println!("{}", serde_json::to_string_pretty(&artifacts.summary).unwrap());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => execute(args, RunMode::Solve),
        Command::SweepEpsilon(args) => execute(args, RunMode::SweepEpsilon),
        Command::ComparePde(args) => execute(args, RunMode::ComparePde),
        Command::ProbeContinuity(args) => execute(args, RunMode::ProbeContinuity),
        Command::ValidateOperators { samples, seed } => {
            let report = harness::validate_operators(*samples, *seed);
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            if report.pass {
                Ok(())
            } else {
                eprintln!(
                    "{}",
                    serde_json::json!({
                        "error": "operator validation failed",
                        "code": "OperatorValidation",
                        "failed": report.failures(),
                    })
                );
                return ExitCode::from(1);
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.to_string(), "code": e.code() })
            );
            ExitCode::from(e.exit_status() as u8)
        }
    }
}

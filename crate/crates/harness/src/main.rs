use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use svelab::{run, Experiment, ExperimentConfig};

/// Euler-type scheme experiments for stochastic Volterra equations.
#[derive(Debug, Parser)]
#[command(name = "svelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate coupled reference and coarse paths.
    Simulate(RunArgs),
    /// Strong convergence rate regression.
    Rate(RunArgs),
    /// Quadratic-variation limit of the error functionals.
    Qv(RunArgs),
    /// Vanishing of the psi terms of the increment decomposition.
    Psi(RunArgs),
    /// Compare the rescaled error with the limit equation.
    LimitLaw(RunArgs),
    /// Kernel admissibility and order checks.
    KernelCheck(RunArgs),
    /// Numerical checks of the appendix inequalities and integrals.
    AppendixCheck(RunArgs),
    /// Increment-moment scaling of the scheme.
    Holder(RunArgs),
    /// Parse and validate a config without running it.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: config output_dir, then ./out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    allow_unbounded: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    allow_unbounded: bool,
}

fn load(path: &Path, allow_unbounded: bool) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path).with_context(|| format!("in {}", path.display()))?;
    config.allow_unbounded |= allow_unbounded;
    Ok(config)
}

fn execute(experiment: Experiment, args: RunArgs) -> anyhow::Result<bool> {
    let mut config = load(&args.config, args.allow_unbounded)?;
    if config.experiment != experiment {
        bail!("experiment: config declares {} but the subcommand is {experiment}", config.experiment);
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if args.threads == Some(0) {
        bail!("--threads must be positive");
    }
    config.validate().with_context(|| format!("in {}", args.config.display()))?;
    let out = args
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
    let outcome = run(&config, &out, args.threads)?;
    for check in &outcome.report.checks {
        println!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
    }
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    println!("report written to {}", outcome.out_dir.join("report.json").display());
    Ok(outcome.report.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Validate(args) => load(&args.config, args.allow_unbounded).and_then(|c| {
            c.validate()?;
            println!("{}: valid {} config (hash {})", args.config.display(), c.experiment, c.hash());
            Ok(true)
        }),
        Command::Simulate(a) => execute(Experiment::Simulate, a),
        Command::Rate(a) => execute(Experiment::Rate, a),
        Command::Qv(a) => execute(Experiment::Qv, a),
        Command::Psi(a) => execute(Experiment::Psi, a),
        Command::LimitLaw(a) => execute(Experiment::LimitLaw, a),
        Command::KernelCheck(a) => execute(Experiment::KernelCheck, a),
        Command::AppendixCheck(a) => execute(Experiment::AppendixCheck, a),
        Command::Holder(a) => execute(Experiment::Holder, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlac_harness::config::{ExperimentConfig, ExperimentKind};
use nlac_harness::{run_experiment, selftest, write_report, HarnessError, Result};

#[derive(Parser)]
#[command(name = "nlac", version, about = "Nonlocal Allen-Cahn solvers and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one initial condition and write the energy trace and snapshots.
    Evolve(RunArgs),
    /// Time-step ladder against a fine benchmark; writes error/order tables.
    Converge(RunArgs),
    /// Convolution counts against final error over a time-step ladder.
    Cost(RunArgs),
    /// Phase field coupled to heat flow.
    Coupled(RunArgs),
    /// Quick internal consistency checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `experiment.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// `section.key=value`, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<()> {
    let mut overrides = args.overrides;
    if let Some(seed) = args.seed {
        overrides.push(format!("experiment.seed={seed}"));
    }
    let mut cfg = ExperimentConfig::load(&args.config, &overrides)?;
    if cfg.experiment.kind != kind {
        log::info!("running the file's {:?} setup as {kind:?}", cfg.experiment.kind);
        cfg.experiment.kind = kind;
        cfg.validate()?;
    }
    let out = args
        .out
        .or_else(|| cfg.experiment.output_dir.clone())
        .ok_or_else(|| HarnessError::Config("no output directory: pass --out or set experiment.output_dir".into()))?;
    let report = run_experiment(&cfg)?;
    print!("{}", write_report(&cfg, &report, &out)?);
    println!("outputs in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve(a) => run(ExperimentKind::Evolve, a),
        Command::Converge(a) => run(ExperimentKind::Converge, a),
        Command::Cost(a) => run(ExperimentKind::Cost, a),
        Command::Coupled(a) => run(ExperimentKind::Coupled, a),
        Command::Selftest => selftest::selftest().map(|checks| {
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                std::process::exit(1);
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

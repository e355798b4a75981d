use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rspnet_harness::commands::resolve_threads;
use rspnet_harness::{Command, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "rspnet", version, about = "Experiments on networks of reinforced stochastic processes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment config.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads; the THREADS environment variable takes precedence.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate master runs and write checkpoint states.
    Simulate(Common),
    /// Classify the synchronization and polarization regime.
    Regime(Common),
    /// Estimate barrier probabilities with refined targets and intervals.
    Estimate(Common),
    /// Composite confidence intervals only.
    Interval(Common),
    /// Estimates against refined targets at each snapshot step.
    Figure1(Common),
    /// Intervals against the long-horizon proxy at each snapshot step.
    Figure2(Common),
    /// Interval coverage and part counts.
    Coverage(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rspnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let (command, common) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Regime(c) => (Command::Regime, c),
        Cmd::Estimate(c) => (Command::Estimate, c),
        Cmd::Interval(c) => (Command::Interval, c),
        Cmd::Figure1(c) => (Command::Figure1, c),
        Cmd::Figure2(c) => (Command::Figure2, c),
        Cmd::Coverage(c) => (Command::Coverage, c),
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if common.threads.is_some() {
        cfg.replication.threads = common.threads;
    }
    let env = std::env::var("THREADS").ok();
    let threads = resolve_threads(&cfg, env.as_deref())?;
    let out = common.out.unwrap_or_else(|| cfg.output.dir.clone());
    let index = rspnet_harness::run(command, &cfg, &out, threads)?;
    if command == Command::Regime || command == Command::Coverage {
        println!("{}", serde_json::to_string_pretty(&index.summary).expect("summary serializes"));
    }
    for f in &index.files {
        eprintln!("wrote {} ({} rows)", out.join(&f.name).display(), f.rows);
    }
    Ok(())
}

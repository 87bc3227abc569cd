//! `wkm`: stage-per-command pipeline driver. Each command reads one config
//! file (TOML or JSON), honors long-form overrides, and writes deterministic
//! artifacts plus a manifest into the configured output directory.

mod config;
mod errors;
mod manifest;
mod providers;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{parse_mode, parse_split, Overrides, RunConfig};
use errors::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "wkm", about = "Knowledge-augmented agent planning pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the run configuration (TOML or JSON).
    #[arg(long, global = true, default_value = "wkm.toml")]
    config: PathBuf,

    /// Worker pool bound for episodes; 1 by default.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Override planner.gamma.
    #[arg(long, global = true)]
    gamma: Option<f64>,

    /// Override planner.mode (full, no_state, no_task, explicit_state).
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Override eval.split (train, test-seen, test-unseen).
    #[arg(long, global = true)]
    split: Option<String>,

    /// Override env.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the task suite.
    GenSuite,
    /// Collect agent exploration trajectories on the train split.
    Explore,
    /// Replay experts, synthesize task knowledge, summarize states.
    Synthesize,
    /// Build the retrievable state knowledge base.
    BuildKb,
    /// Emit the agent and knowledge-model training corpora.
    EmitTrain,
    /// Run the fused planner over a split, writing traces and metrics.
    Plan,
    /// Evaluate a split and write the metrics CSV.
    Eval,
    /// Evaluate across the configured gamma list.
    Sweep,
}

fn run(cli: &Cli) -> CliResult<()> {
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let mut config = RunConfig::load(&cli.config)?;
    let overrides = Overrides {
        seed: cli.seed,
        gamma: cli.gamma,
        mode: cli.mode.as_deref().map(parse_mode).transpose()?,
        split: cli.split.as_deref().map(parse_split).transpose()?,
    };
    overrides.apply(&mut config)?;
    match cli.command {
        Command::GenSuite => stages::gen_suite(&config),
        Command::Explore => stages::explore(&config),
        Command::Synthesize => stages::synthesize(&config),
        Command::BuildKb => stages::build_kb(&config),
        Command::EmitTrain => stages::emit_train(&config),
        Command::Plan => stages::plan(&config, cli.jobs),
        Command::Eval => stages::eval(&config, cli.jobs),
        Command::Sweep => stages::sweep(&config, cli.jobs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(e.emit() as u8),
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jobsignal_cli::{run_stage, PipelineConfig, PipelineError, Stage};

#[derive(Parser)]
#[command(name = "jobsignal", about = "Signaling-in-hiring estimation and counterfactual pipeline")]
struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the configured stages in order, or only the named ones.
    Run {
        #[arg(long = "stage")]
        stages: Vec<Stage>,
    },
    Simulate,
    Measure,
    Consider,
    FitReduced,
    FitCopula,
    BuildPool,
    InvertSupply,
    FitBeliefs,
    FitDemand,
    Counterfactual,
    Report,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Run { .. } => return None,
            Command::Simulate => Stage::Simulate,
            Command::Measure => Stage::Measure,
            Command::Consider => Stage::Consider,
            Command::FitReduced => Stage::FitReduced,
            Command::FitCopula => Stage::FitCopula,
            Command::BuildPool => Stage::BuildPool,
            Command::InvertSupply => Stage::InvertSupply,
            Command::FitBeliefs => Stage::FitBeliefs,
            Command::FitDemand => Stage::FitDemand,
            Command::Counterfactual => Stage::Counterfactual,
            Command::Report => Stage::Report,
        })
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    let stages = match (&cli.command, cli.command.stage()) {
        (_, Some(stage)) => vec![stage],
        (Command::Run { stages }, None) if stages.is_empty() => cfg.stages.clone(),
        (Command::Run { stages }, None) => stages.clone(),
        _ => unreachable!(),
    };
    for stage in stages {
        let e = run_stage(stage, &cfg).map_err(|e| PipelineError::Failed { context: format!("stage `{stage}`"), message: e.to_string() })?;
        eprintln!("{}: {} outputs in {} ms", e.stage, e.outputs.len(), e.wall_ms);
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

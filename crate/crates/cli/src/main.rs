//! `kinlab`: experiments for a degenerate parabolic SPDE laboratory, each a
//! subcommand over a JSON configuration with deterministic seeded outputs.

mod commands;
mod config;
mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::CliFailure;
use config::RunConfig;
use report::ReportWriter;

#[derive(Parser)]
#[command(
    name = "kinlab",
    version,
    about = "SPDE approximation-cascade laboratory"
)]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides config and KINLAB_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for ensembles (overrides KINLAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress self-describing metadata so reruns are byte-identical.
    #[arg(long, global = true)]
    reproducible: bool,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate one trajectory and dump snapshots.
    Run,
    /// Common-noise distance matrix over a viscosity list.
    Cascade,
    /// L1 contraction ratios over common-noise pairs.
    Contraction,
    /// tau-uniform Lp energy statistics.
    Energy,
    /// Uniform-in-tau fractional-seminorm statistics.
    Regularity,
    /// Kinetic weak-form and chain-rule residuals.
    KineticCheck,
    /// Generalized Ito formula residuals.
    ItoCheck,
    /// Sampling audit of the structural hypotheses.
    Audit,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("KINLAB_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // Ignore failure: the global pool may already exist in-process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }

    match execute(&cli) {
        Ok(()) => 0,
        Err(CliFailure::Config(e)) => {
            emit_error(&serde_json::json!({
                "error": { "kind": "config", "field": e.field, "message": e.message }
            }));
            2
        }
        Err(CliFailure::BlowUp { step }) => {
            emit_error(&serde_json::json!({
                "error": { "kind": "blow-up", "step": step }
            }));
            3
        }
        Err(CliFailure::Other(message)) => {
            emit_error(&serde_json::json!({
                "error": { "kind": "runtime", "message": message }
            }));
            1
        }
    }
}

fn emit_error(doc: &serde_json::Value) {
    eprintln!(
        "{}",
        serde_json::to_string(doc).expect("error document serializes")
    );
}

fn execute(cli: &Cli) -> Result<(), CliFailure> {
    let config_path = cli.config.as_ref().ok_or_else(|| {
        CliFailure::Config(config::ConfigError {
            field: "--config".into(),
            message: "a configuration file is required".into(),
        })
    })?;
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        CliFailure::Config(config::ConfigError {
            field: "--config".into(),
            message: format!("cannot read {}: {e}", config_path.display()),
        })
    })?;
    let mut config = RunConfig::from_json(&text).map_err(CliFailure::Config)?;
    if let Some(seed) = cli.seed {
        config.noise.seed = seed;
    }

    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var("KINLAB_OUT").ok().map(PathBuf::from))
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("kinlab-out"));
    let writer = ReportWriter::new(&out_dir, cli.reproducible)?;

    match cli.command {
        Command::Run => commands::run(&config, &writer),
        Command::Cascade => commands::cascade(&config, &writer),
        Command::Contraction => commands::contraction(&config, &writer),
        Command::Energy => commands::energy(&config, &writer),
        Command::Regularity => commands::regularity(&config, &writer),
        Command::KineticCheck => commands::kinetic_check(&config, &writer),
        Command::ItoCheck => commands::ito_check(&config, &writer),
        Command::Audit => commands::audit(&config, &writer),
    }
}

//! `vars`: drives the pipeline from synthetic data to dashboards.
//!
//! Every subcommand reads one JSON run configuration, writes its artifacts
//! plus a `run_manifest.json` into the output directory, and exits 0 on
//! success. Failures print a single JSON line to stderr and exit nonzero.
//! Runs are deterministic: the same config and seed reproduce every
//! artifact byte for byte (the run manifest, which carries wall time, and
//! the profile report, which carries latencies, excepted).

mod commands;
mod config;
mod context;

use clap::{Parser, Subcommand};
use context::RunContext;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;
use vars_core::error::{Result, VarsError};

#[derive(Parser)]
#[command(
    name = "vars",
    version,
    about = "Graph-based ECG representation learning pipeline",
    after_help = "Set VARS_LOG=info (or debug) for progress logging."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration JSON; missing sections fall back to defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides out_dir from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overwrite artifacts left by a previous run.
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads for the parallel regions (per-record batches, sweep
    /// grid points); 1 keeps everything sequential.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Comma-separated match tolerances in seconds for explain, e.g.
    /// 0.25,0.5,1.
    #[arg(long, global = true, value_delimiter = ',')]
    tolerances: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the three-class synthetic dataset.
    Synth,
    /// Pretrain the encoder on the training manifest.
    Train,
    /// Fit the classifier head on a pretrained checkpoint.
    Fit,
    /// Score a fitted checkpoint on the evaluation manifest.
    Eval,
    /// Explain held-out records: JSON, dashboards, match-rate artifacts.
    Explain,
    /// Rerun the pipeline across a hyperparameter grid.
    Sweep,
    /// Profile parameter count, flop estimate, and single-record latency.
    Bench,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Fit => "fit",
            Command::Eval => "eval",
            Command::Explain => "explain",
            Command::Sweep => "sweep",
            Command::Bench => "bench",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter("VARS_LOG")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = serde_json::json!({"error": err.to_string(), "kind": error_kind(&err)});
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    init_thread_pool(cli.jobs)?;
    let mut config = config::load_run_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config::apply_seed_override(&mut config, seed);
    }
    if let Some(tolerances) = cli.tolerances {
        config.explain.tolerances = Some(tolerances);
    }
    config.validate()?;

    let out = cli
        .out
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            VarsError::Config("an output directory is required: pass --out or set out_dir".into())
        })?;
    let ctx = RunContext {
        config_hash: config::config_hash(&config),
        config,
        out,
        force: cli.force,
    };

    let name = cli.command.name();
    log::info!("running {name} into {}", ctx.out.display());
    let started = Instant::now();
    let (outputs, seed) = match cli.command {
        Command::Synth => commands::synth(&ctx)?,
        Command::Train => commands::train(&ctx)?,
        Command::Fit => commands::fit(&ctx)?,
        Command::Eval => commands::eval(&ctx)?,
        Command::Explain => commands::explain(&ctx)?,
        Command::Sweep => commands::sweep(&ctx)?,
        Command::Bench => commands::bench(&ctx)?,
    };
    ctx.write_run_manifest(name, seed, &outputs, started.elapsed())?;
    log::info!("{name} finished in {:?}", started.elapsed());
    Ok(())
}

#[cfg(feature = "parallel")]
fn init_thread_pool(jobs: usize) -> Result<()> {
    if jobs == 0 {
        return Err(VarsError::Config("jobs must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| VarsError::Contract(format!("thread pool setup failed: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn init_thread_pool(jobs: usize) -> Result<()> {
    if jobs == 0 {
        return Err(VarsError::Config("jobs must be positive".into()));
    }
    if jobs > 1 {
        log::warn!("built without the parallel feature; --jobs {jobs} runs sequentially");
    }
    Ok(())
}

fn error_kind(err: &VarsError) -> &'static str {
    match err {
        VarsError::ShapeMismatch { .. } => "shape",
        VarsError::NumericOverflow { .. } => "numeric",
        VarsError::Contract(_) => "contract",
        VarsError::Config(_) => "config",
        VarsError::Format { .. } => "format",
        VarsError::Io { .. } => "io",
    }
}

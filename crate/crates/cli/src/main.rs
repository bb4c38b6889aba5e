//! `tsplidar`: generate scenes and datasets, train the encoder and baseline,
//! build the knowledge base, and run the closed- and open-set evaluations.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Default output root when `--out-root` is not given.
const OUT_ROOT_ENV: &str = "TSP_OUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "tsplidar", version, about)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Directory that relative paths in the config resolve against.
    #[arg(long, global = true, env = OUT_ROOT_ENV)]
    out_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render depth/reflectivity maps for inspection.
    GenScenes(Args),
    /// Simulate a histogram dataset.
    Gen(Args),
    /// Split the dataset and train the encoder (and optionally the baseline).
    Train(Args),
    /// Build the knowledge base from validation features.
    SkbBuild(Args),
    /// Closed-set accuracy versus SNR.
    EvalClosed(Args),
    /// Open-set accuracy with and without knowledge-base updates.
    EvalOpen(Args),
    /// Re-render charts from result CSVs.
    Plot(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    #[arg(long)]
    config: PathBuf,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    use tsp_core::Error as E;
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<CliError>() {
            return match c {
                CliError::Config(_) => (1, "config"),
                CliError::Io(_) => (2, "io"),
                CliError::Numeric(_) => (3, "numeric"),
            };
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) | E::Protocol(_) | E::OutOfRange { .. } | E::EmptyTarget | E::UnknownLabel(_) => {
                    (1, "config")
                }
                E::Io { .. } | E::Format { .. } => (2, "io"),
                _ => (3, "numeric"),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (2, "io");
        }
    }
    (3, "numeric")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = classify(&err);
            let reason = format!("{err:#}").replace(['\n', '\r'], " ");
            eprintln!("tsplidar: error code={code} kind={kind} reason={reason:?}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let workers = cli.workers.max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let root = cli.out_root.unwrap_or_else(|| PathBuf::from("."));
    let ctx = commands::Context { root, workers };
    match cli.command {
        Command::GenScenes(a) => commands::gen_scenes(&ctx, &a.config),
        Command::Gen(a) => commands::gen(&ctx, &a.config),
        Command::Train(a) => commands::train(&ctx, &a.config),
        Command::SkbBuild(a) => commands::skb_build(&ctx, &a.config),
        Command::EvalClosed(a) => commands::eval_closed(&ctx, &a.config),
        Command::EvalOpen(a) => commands::eval_open(&ctx, &a.config),
        Command::Plot(a) => commands::plot(&ctx, &a.config),
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use bayesimp::cli::{exit_code, run, Command, RunConfig};
use bayesimp::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bayesimp", version, about = "Two-stage causal data fusion with interventional mean processes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// INI configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[out] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed; overrides `[data] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for seed replicates.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Write D1, D2 and run metadata.
    Gen,
    /// Effect curves of every surrogate over a seed sweep.
    Ablation,
    /// Optimisation races of warm-started and plain GP priors.
    Bo,
    /// Coverage of credible intervals against the Monte-Carlo truth.
    Calibrate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn execute(cli: &Cli) -> bayesimp::Result<()> {
    let command = match cli.command {
        Cmd::Gen => Command::Gen,
        Cmd::Ablation => Command::Ablation,
        Cmd::Bo => Command::Bo,
        Cmd::Calibrate => Command::Calibrate,
    };
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::ConfigSection("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| {
        log::error!("cannot read {}", path.display());
        Error::Io(e)
    })?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        config.data.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.dir.clone())
        .ok_or_else(|| Error::ConfigSection("no output directory: pass --out or set [out] dir".into()))?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::ConfigSection(format!("cannot start {n} threads: {e}")))?;
    }
    run(command, &config, &out)
}

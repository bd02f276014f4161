use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use lra_noise_cli::commands;
use lra_noise_cli::{ExperimentConfig, Outcome, Overrides};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    KernelCheck,
    Predict,
    Simulate,
    Validate,
    Sweep,
}

/// Local statistics of filtered back-projection noise.
///
/// Exit status: 0 when every threshold is met, 1 on a threshold failure,
/// 2 on a configuration or runtime error.
#[derive(Debug, Parser)]
#[command(name = "lra-noise", version)]
struct Cli {
    command: Command,
    /// Experiment config (JSON, "schema": 1).
    #[arg(long)]
    config: PathBuf,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Renders PNG plots from the emitted CSV files.
    #[arg(long)]
    plots: bool,
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    cfg.apply(&Overrides { seed: cli.seed, threads: cli.threads, plots: cli.plots })?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    pool.build()?.install(|| match cli.command {
        Command::KernelCheck => commands::kernel_check(&cfg),
        Command::Predict => commands::predict(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Validate => commands::validate(&cfg),
        Command::Sweep => commands::sweep(&cfg),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

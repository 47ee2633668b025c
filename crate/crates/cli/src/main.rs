use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qsync_cli::config::{self, Experiment};
use qsync_cli::{run_experiment, CliError};

#[derive(Parser)]
#[command(
    name = "qsync",
    version,
    about = "Synchronization and feedback-learning experiments on small open quantum systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV files.
    Run {
        /// fig2, fig4, fig5, fig7 or custom.
        #[arg(long)]
        experiment: String,
        /// Key-value configuration file, or a CSV previously written by this tool.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Seed for trajectory-mode feedback; overrides `feedback.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// `section.key=value`, applied after the file. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the resolved configuration instead of running.
        #[arg(long)]
        print_config: bool,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let Command::Run { experiment, config: path, out, workers, seed, mut overrides, print_config } = cli.command;
    let experiment: Experiment = experiment.parse()?;
    if let Some(seed) = seed {
        overrides.push(format!("feedback.seed={seed}"));
    }
    let mut cfg = config::load(experiment, path.as_deref(), &overrides)?;
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    if print_config {
        print!("{}", cfg.to_config_text());
        return Ok(());
    }
    log::info!("running {} with {} workers", cfg.experiment, workers);
    for artifact in run_experiment(&cfg, workers)? {
        let path = artifact.write_to(&cfg.output.dir)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qsync: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

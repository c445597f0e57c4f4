use std::path::PathBuf;
use std::process::ExitCode;

use bbc_cli::{cmd_audit, cmd_enroll, cmd_run, cmd_validate, CliError, ExitStatus, RunRequest};
use clap::{Parser, Subcommand};

/// Biometric blockchain scenario runner, chain validator and credit auditor.
#[derive(Debug, Parser)]
#[command(name = "bbc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one or more scenario configs and write their output trees.
    Run {
        /// Scenario config (TOML). Repeat to run a batch concurrently.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Output directory; with several configs each gets `<out>/<stem>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Golden output tree (directory) or run log (file) to byte-compare.
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Registry the run must reproduce.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Validate a chain store against an enrollment registry.
    Validate {
        chain: PathBuf,
        /// Defaults to registry.txt next to the chain store.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Print the credit event log and table derived from a chain store.
    Audit {
        chain: PathBuf,
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Metrics file whose credit snapshot must match. Defaults to
        /// metrics.txt next to the chain store, if present.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Generate a synthetic fleet registry.
    Enroll {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        size: usize,
        /// Feature dimension.
        #[arg(long)]
        dim: Option<usize>,
        /// Registry file to write.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Directory to write registry.txt into.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run { configs, out, golden, registry } => cmd_run(&RunRequest { configs, out, golden, registry }),
        Command::Validate { chain, registry } => cmd_validate(&chain, registry.as_deref()),
        Command::Audit { chain, registry, metrics } => cmd_audit(&chain, registry.as_deref(), metrics.as_deref()),
        Command::Enroll { seed, size, dim, registry, out } => {
            cmd_enroll(seed, size, dim, registry.as_deref(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(ExitStatus::Config.code() as u8) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status.code() as u8)
        }
    }
}

use clap::{Parser, ValueEnum};
use regdist_cli::{config, run, Overrides, RunError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Gen,
    Eval,
    Carleson,
    Alpha,
    Beta,
    Bwgl,
    Flow,
    Ntlimit,
    Blowup,
    Magic,
    Bench,
}

/// Regularized distance laboratory: run one experiment from a config file.
#[derive(Debug, Parser)]
#[command(name = "regdist", version)]
struct Cli {
    command: Command,
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides REGDIST_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let result = config::load(&cli.config)
        .map_err(RunError::from)
        .and_then(|cfg| run(&name, cfg, &Overrides { out: cli.out, threads: cli.threads, seed: cli.seed }));
    match result {
        Ok(summary) => {
            println!("{} artifacts in {} (config {})", summary.artifacts.len(), summary.out.display(), &summary.config_hash[..12]);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("regdist {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

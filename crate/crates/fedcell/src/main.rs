use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use fedcell::output::emit_outputs;
use fedcell::{config, run_experiment, ExecMode, Result};

#[derive(Parser)]
#[command(name = "fedcell", version, about = "Federated lottery-ticket learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config and emit metrics/ledger CSVs.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: config's out_dir, else ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match cli.command {
        Command::Run { config, out, seed } => match cmd_run(&config, out, seed) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}

fn cmd_run(config_path: &PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = config::parse_config(config_path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.out_dir = Some(out);
    }
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));

    let report = run_experiment(&cfg, ExecMode::default())?;
    emit_outputs(&report.metrics, &report.ledger, &cfg, &out_dir)?;

    let total_mb = report.ledger.total_bytes() as f64 / 1e6;
    match report.metrics.rows.last() {
        Some(last) => println!(
            "{} | {} rounds | mean test accuracy {:.4} | total traffic {:.3} MB | seed {}",
            cfg.protocol, cfg.rounds, last.acc_mean, total_mb, cfg.seed
        ),
        None => println!("{} | 0 rounds | seed {}", cfg.protocol, cfg.seed),
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

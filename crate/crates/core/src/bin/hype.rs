use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use hype::harness::{bias_dump, run_bench, run_verify, DumpFormat, HarnessError, RunConfig};
use hype::Width;

#[derive(Parser)]
#[command(
    name = "hype",
    version,
    about = "Hyperbolic positional encoding: verification, bias dumps, storage benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every verification suite; exit 0 only if all checks pass.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        width: Option<Width>,
        /// Run suites on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Write the explicit L x L hyperbolic bias.
    BiasDump {
        #[arg(long = "len", short = 'L')]
        len: usize,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value = "csv")]
        format: DumpFormat,
        #[arg(long, default_value = "f64")]
        width: Width,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare storage and time of the concat path and the explicit mask.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        width: Option<Width>,
    },
}

fn load(
    config: Option<&Path>,
    seed: Option<u64>,
    width: Option<Width>,
) -> Result<RunConfig, HarnessError> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(width) = width {
        cfg = cfg.with_width(width);
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| HarnessError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialises") + "\n"
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Verify {
            config,
            out,
            seed,
            width,
            parallel,
        } => {
            let cfg = load(config.as_deref(), seed, width)?;
            let report = run_verify(&cfg, parallel);
            for line in report.lines() {
                println!("{line}");
            }
            if let Some(path) = out.as_deref() {
                write_out(Some(path), &to_json(&report))?;
            }
            match report.first_failure {
                None => {
                    println!("verify: all checks passed");
                    Ok(())
                }
                Some(first) => Err(HarnessError::Failed(first)),
            }
        }
        Command::BiasDump {
            len,
            mu,
            tau,
            format,
            width,
            out,
        } => write_out(out.as_deref(), &bias_dump(len, mu, tau, width, format)?),
        Command::Bench {
            config,
            out,
            seed,
            width,
        } => {
            let cfg = load(config.as_deref(), seed, width)?;
            let report = run_bench(&cfg)?;
            write_out(out.as_deref(), &to_json(&report))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hype: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

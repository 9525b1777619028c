use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use madrop_core::experiment::{self, ExperimentConfig};
use madrop_core::{Error, SchemeKind};

/// Energy-minimal packet scheduling with buffering and drop constraints.
#[derive(Debug, Parser)]
#[command(name = "madrop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize a single configuration and print the result record as JSON.
    Optimize(Common),
    /// Optimize every point of the configured grid and write a CSV.
    Sweep(Common),
    /// Optimize, then check the result against a Monte Carlo simulation.
    Validate(Common),
}

/// Flags override values from the config file, which override defaults.
#[derive(Debug, Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scheme: Option<SchemeKind>,
    /// Buffer size.
    #[arg(long = "B")]
    buffer: Option<usize>,
    /// Maximum number of successive drops.
    #[arg(long = "N")]
    continuity: Option<usize>,
    #[arg(long = "theta-tar")]
    theta_tar: Option<f64>,
    /// Gain floor of the energy integral.
    #[arg(long)]
    eps: Option<f64>,
    /// Worker threads for sweeps.
    #[arg(long, env = "MADROP_WORKERS")]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.scheme {
            cfg.scheme = v;
        }
        if let Some(v) = self.buffer {
            cfg.buffer = v;
        }
        if let Some(v) = self.continuity {
            cfg.continuity = v;
        }
        if let Some(v) = self.theta_tar {
            cfg.theta_tar = v;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::Config(format!("stdout: {e}"))),
    }
}

fn json(value: &impl serde::Serialize) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("records serialize");
    s.push(b'\n');
    s
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Optimize(args) => {
            let cfg = args.load()?;
            let (record, _) = experiment::optimize(&cfg)?;
            emit(args.out.as_deref(), &json(&record))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(args) => {
            let cfg = args.load()?;
            let rows = experiment::sweep(&cfg, args.workers())?;
            let mut buf = Vec::new();
            experiment::write_sweep_csv(&rows, &mut buf)?;
            emit(args.out.as_deref(), &buf)?;
            for row in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "warning: {} B={} N={} theta_tar={} failed: {}",
                    row.scheme,
                    row.buffer,
                    row.continuity,
                    row.theta_tar,
                    row.error.as_deref().unwrap_or_default()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(args) => {
            let cfg = args.load()?;
            let record = experiment::validate(&cfg)?;
            emit(args.out.as_deref(), &json(&record))?;
            Ok(if record.pass { ExitCode::SUCCESS } else { ExitCode::from(4) })
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) | Error::UnknownScheme(_) => ExitCode::from(2),
        Error::Infeasible(_) => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

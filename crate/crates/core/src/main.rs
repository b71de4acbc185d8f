use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qcoll::harness::commands::{cmd_calibrate, cmd_estimate, cmd_lowerbound, cmd_sweep, cmd_test, cmd_verify, Output};
use qcoll::harness::{write_file, ExperimentConfig};

#[derive(Parser)]
#[command(name = "qcoll", version, about = "Identity testing for collections of quantum states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Size of the trial worker pool
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict `verify` to one check group or check name
    #[arg(long)]
    filter: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite; nonzero exit on any failure
    Verify {
        #[command(flatten)]
        common: Common,
        /// Perturb a covariance coefficient; the estimator checks must then fail
        #[arg(long)]
        mutate: bool,
    },
    /// Exact mean and variance of the estimator per (instance, mu)
    Estimate(Common),
    /// Seeded tester trials: per-trial JSONL and a summary CSV
    Test(Common),
    /// Minimal mu over the (N, d) grid and fitted log-log slopes
    Sweep(Common),
    /// Lower-bound ledger rows
    Lowerbound(Common),
    /// Fit the variance constant and b_const
    Calibrate(Common),
}

fn load(common: &Common) -> qcoll::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = Some(w);
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(f) = &common.filter {
        cfg.filter = Some(f.clone());
    }
    cfg.validate()?;
    if let Some(w) = cfg.workers {
        // fails only if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, outputs: &[Output]) -> qcoll::Result<()> {
    for o in outputs {
        let path = write_file(&cfg.out, &o.name, &o.contents)?;
        println!("wrote {}", path.display());
    }
    write_file(&cfg.out, "config.json", &(cfg.canonical_json() + "\n"))?;
    Ok(())
}

fn run(cli: Cli) -> qcoll::Result<ExitCode> {
    let (common, mutate) = match &cli.command {
        Command::Verify { common, mutate } => (common, *mutate),
        Command::Estimate(c) | Command::Test(c) | Command::Sweep(c) | Command::Lowerbound(c) | Command::Calibrate(c) => (c, false),
    };
    let mut cfg = load(common)?;
    cfg.verify.mutate |= mutate;
    let outputs = match cli.command {
        Command::Verify { .. } => {
            let report = cmd_verify(&cfg)?;
            for line in report.lines() {
                println!("{line}");
            }
            emit(&cfg, std::slice::from_ref(&report.output))?;
            return Ok(ExitCode::from(report.exit_code() as u8));
        }
        Command::Estimate(_) => cmd_estimate(&cfg)?,
        Command::Test(_) => cmd_test(&cfg)?,
        Command::Sweep(_) => cmd_sweep(&cfg)?,
        Command::Lowerbound(_) => cmd_lowerbound(&cfg)?,
        Command::Calibrate(_) => cmd_calibrate(&cfg)?,
    };
    emit(&cfg, &outputs)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

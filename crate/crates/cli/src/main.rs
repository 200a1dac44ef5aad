//! `admpriors`: risk maps, admissibility verdicts, mixture information,
//! the prior beating the uniform, and Feynman-Kac estimates from JSON configs.
//!
//! Exit codes: 0 success, 1 runtime error or failed post-check,
//! 2 inconclusive verdict, 3 rejected configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::Status;
use config::{load, ConfigError};
use output::{config_hash, OutDir};

#[derive(Parser)]
#[command(name = "admpriors", version, about = "Asymptotic admissibility of Bayes priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Risk of a prior or decision field at interior grid nodes.
    RiskMap(Common),
    /// Admissibility verdict for a prior and covariance.
    Check(Common),
    /// Information map and confidence ellipses of the normal mixture.
    Mixture(Common),
    /// Solve Brown's equation for the mixture and report risk gains.
    BeatUniform(Common),
    /// Feynman-Kac path estimate at one point.
    Fk(Common),
    /// Write the JSON Schema of every config document.
    Schema {
        #[arg(long, default_value = "schema")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for the path sampler (fk only).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to ADMPRIORS_THREADS, then all cores.
    #[arg(long, env = "ADMPRIORS_THREADS")]
    threads: Option<usize>,
    /// Solver residual tolerance (beat-uniform only).
    #[arg(long)]
    residual_tol: Option<f64>,
}

enum Failure {
    Config(ConfigError),
    Run(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn reject(flag: &str, set: bool, command: &str) -> Result<(), ConfigError> {
    if set {
        return Err(ConfigError(format!("{flag} does not apply to {command}")));
    }
    Ok(())
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn start<T: Serialize>(name: &str, args: &Common, cfg: &T) -> Result<OutDir, Failure> {
    let hash = config_hash(name, cfg)?;
    let mut out = OutDir::create(&args.out, hash)?;
    out.json("run.json", &serde_json::json!({ "command": name, "config": cfg }))?;
    Ok(out)
}

fn write_schemas(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, schema) in config::schemas() {
        let path = dir.join(format!("{name}.schema.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&schema)? + "\n")?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Status, Failure> {
    let (name, args) = match &cli.command {
        Command::Schema { out } => {
            write_schemas(out)?;
            return Ok(Status::Ok);
        }
        Command::RiskMap(a) => ("risk-map", a),
        Command::Check(a) => ("check", a),
        Command::Mixture(a) => ("mixture", a),
        Command::BeatUniform(a) => ("beat-uniform", a),
        Command::Fk(a) => ("fk", a),
    };
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(anyhow::Error::from)?;
    }
    if !matches!(cli.command, Command::Fk(_)) {
        reject("--seed", args.seed.is_some(), name)?;
    }
    if !matches!(cli.command, Command::BeatUniform(_)) {
        reject("--residual-tol", args.residual_tol.is_some(), name)?;
    }
    let base = base_dir(&args.config);

    let (status, out) = match &cli.command {
        Command::RiskMap(_) => {
            let cfg: config::RiskMapConfig = load(&args.config)?;
            let grid = cfg.validate(&base)?;
            let mut out = start(name, args, &cfg)?;
            (commands::risk_map(&cfg, grid, &base, &mut out)?, out)
        }
        Command::Check(_) => {
            let cfg: config::CheckConfig = load(&args.config)?;
            cfg.validate(&base)?;
            let mut out = start(name, args, &cfg)?;
            (commands::check(&cfg, &base, &mut out)?, out)
        }
        Command::Mixture(_) => {
            let cfg: config::MixtureConfig = load(&args.config)?;
            cfg.validate()?;
            let mut out = start(name, args, &cfg)?;
            (commands::mixture(&cfg, &mut out)?, out)
        }
        Command::BeatUniform(_) => {
            let mut cfg: config::BeatUniformRun = load(&args.config)?;
            if let Some(t) = args.residual_tol {
                cfg.experiment.solver.residual_tol = t;
            }
            cfg.validate(&base)?;
            let mut out = start(name, args, &cfg)?;
            (commands::beat_uniform(&cfg, &base, &mut out)?, out)
        }
        Command::Fk(_) => {
            let mut cfg: config::FkConfig = load(&args.config)?;
            if let Some(s) = args.seed {
                cfg.paths.seed = s;
            }
            cfg.validate()?;
            let mut out = start(name, args, &cfg)?;
            (commands::fk(&cfg, &mut out)?, out)
        }
        Command::Schema { .. } => unreachable!(),
    };
    eprintln!("config hash {}", out.hash());
    for f in out.written() {
        eprintln!("wrote {}", f.display());
    }
    Ok(status)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Inconclusive) => ExitCode::from(2),
        Ok(Status::ChecksFailed) => {
            eprintln!("post-checks failed; see summary.json");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

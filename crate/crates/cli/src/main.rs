//! `monomap`: batch front end for the solver, the replacement chain and the checks.
//!
//! Exit status: 0 on success, 1 when a check fails or a solve does not
//! converge, 2 on I/O or configuration errors.

mod config;
mod run;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use serde::Serialize;

use config::{Command, ExperimentConfig, Overrides};

#[derive(Parser, Debug)]
#[command(name = "monomap", version, about = "Homeomorphic approximation of monotone planar maps")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Relative gradient tolerance of every solve.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Serialize)]
struct Versions {
    monomap_core: &'static str,
    monomap_cli: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    config_path: Option<String>,
    config: &'a ExperimentConfig,
    versions: Versions,
    wall_time_seconds: f64,
    status: &'static str,
    outputs: &'a [String],
    failures: &'a [String],
    error: Option<String>,
}

/// Errors the core raises when a map fails a check or a solve stalls.
fn is_check_failure(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<monomap::Error>(),
            Some(
                monomap::Error::NotConverged { .. }
                    | monomap::Error::NotMonotone { .. }
                    | monomap::Error::Orientation { .. }
                    | monomap::Error::Consistency(_)
                    | monomap::Error::ChainAborted { .. }
            )
        )
    })
}

fn load(cli: &Cli) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let (mut cfg, base) = match &cli.config {
        Some(p) => (ExperimentConfig::load(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (ExperimentConfig::default(), PathBuf::new()),
    };
    cfg.apply(Overrides { seed: cli.seed, p: cli.p, epsilon: cli.epsilon, tolerance: cli.tolerance });
    cfg.check_command(cli.command)?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    Ok((cfg, base))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let (cfg, base) = match load(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = run::run(cli.command, &cfg, &base, &cli.out);
    let (code, status, outcome, error) = match result {
        Ok(o) if o.failures.is_empty() => (0, "ok", o, None),
        Ok(o) => (1, "check_failed", o, None),
        Err(e) if is_check_failure(&e) => (1, "check_failed", Default::default(), Some(format!("{e:#}"))),
        Err(e) => (2, "error", Default::default(), Some(format!("{e:#}"))),
    };
    for f in &outcome.failures {
        eprintln!("check failed: {f}");
    }
    if let Some(e) = &error {
        eprintln!("error: {e}");
    }
    let manifest = Manifest {
        command: cli.command.name(),
        config_path: cli.config.as_ref().map(|p| p.display().to_string()),
        config: &cfg,
        versions: Versions { monomap_core: monomap::VERSION, monomap_cli: env!("CARGO_PKG_VERSION") },
        wall_time_seconds: start.elapsed().as_secs_f64(),
        status,
        outputs: &outcome.outputs,
        failures: &outcome.failures,
        error,
    };
    let path = cli.out.join("manifest.json");
    let written = serde_json::to_string_pretty(&manifest)
        .map_err(anyhow::Error::from)
        .and_then(|t| std::fs::write(&path, t + "\n").with_context(|| format!("cannot write {}", path.display())));
    if let Err(e) = written {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}

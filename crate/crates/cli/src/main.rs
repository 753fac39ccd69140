//! `starkprobe`: sweeps, scaling fits, dephasing runs and estimation
//! studies for gradient-field quantum probes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::commands::RunOutput;
use crate::config::{parse_override, CommandKind, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "starkprobe", version, about = "Stark-probe simulations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Site occupations over a time grid.
    Evolve(Common),
    /// Long-time Fisher information over sizes and fields.
    QfiSweep(Common),
    /// Power-law exponents (recipes: size-scaling, beta-scan, alpha-vs-delta, fixed-n).
    Scaling(Common),
    /// QFI under dephasing for several rates.
    Dephase(Common),
    /// Maximum-likelihood estimation against the Cramer-Rao bound.
    Estimate(Common),
    /// Checks F_Q <= t^2 ||H2||^2 over a grid.
    BoundCheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Override one config key, e.g. `--set params.sites=[8,10]`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    set: Vec<(String, Value)>,
    /// Print the resolved config and exit without running.
    #[arg(long)]
    print_config: bool,
}

impl Cmd {
    fn split(self) -> (CommandKind, Common) {
        match self {
            Cmd::Evolve(c) => (CommandKind::Evolve, c),
            Cmd::QfiSweep(c) => (CommandKind::QfiSweep, c),
            Cmd::Scaling(c) => (CommandKind::Scaling, c),
            Cmd::Dephase(c) => (CommandKind::Dephase, c),
            Cmd::Estimate(c) => (CommandKind::Estimate, c),
            Cmd::BoundCheck(c) => (CommandKind::BoundCheck, c),
        }
    }
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    config: RunConfig,
    started: String,
    finished: String,
    /// File names relative to the output directory.
    outputs: Vec<String>,
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rng: Option<String>,
    status: String,
}

fn load(kind: CommandKind, common: &Common) -> Result<RunConfig, CliError> {
    let document = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let mut overrides = common.set.clone();
    if let Some(out) = &common.out {
        overrides.push(("out".into(), Value::String(out.display().to_string())));
    }
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.into()));
    }
    if let Some(threads) = common.threads {
        overrides.push(("threads".into(), threads.into()));
    }
    RunConfig::resolve(document, kind, &overrides)
}

fn write_outputs(config: &RunConfig, output: &RunOutput, started: String) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&config.out)?;
    for f in &output.files {
        fs::write(config.out.join(&f.name), &f.bytes)?;
    }
    let manifest = RunManifest {
        tool: "starkprobe".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        started,
        finished: now(),
        outputs: output.files.iter().map(|f| f.name.clone()).collect(),
        warnings: output.warnings.clone(),
        rng: output.rng.map(str::to_string),
        status: match &output.failure {
            None => "ok".into(),
            Some(e) => e.to_string(),
        },
    };
    let path = manifest_path(&config.out, &config.name);
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Resource(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(&path, bytes)?;
    Ok(path)
}

fn manifest_path(out: &Path, name: &str) -> PathBuf {
    out.join(format!("{name}.manifest.json"))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (kind, common) = cli.command.split();
    let config = load(kind, &common)?;
    if common.print_config {
        let text = serde_json::to_string_pretty(&config).map_err(|e| CliError::Resource(e.to_string()))?;
        println!("{text}");
        return Ok(());
    }
    let started = now();
    // Threaded dense kernels round differently with the pool size; keep them
    // sequential so outputs do not depend on --threads.
    starkprobe::faer::set_global_parallelism(starkprobe::faer::Par::Seq);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::Resource(e.to_string()))?;
    let output = pool.install(|| commands::run(&config))?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    let manifest = write_outputs(&config, &output, started)?;
    eprintln!("wrote {}", manifest.display());
    match output.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("starkprobe: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

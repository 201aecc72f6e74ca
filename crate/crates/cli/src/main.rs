//! `zeno-schur`: batch runner for Schur reductions, signature flows, grid
//! sweeps, minimal-model scans and fluctuation reconstruction.

mod config;
mod error;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use config::{ExperimentConfig, Format, Overrides};
use error::CliError;

const FAILURE_MARKER: &str = "FAILED";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "zeno-schur", version, about)]
struct Args {
    /// JSON config (or a manifest from an earlier run).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let artifacts = run::execute(cfg)?;
    let wall = started.elapsed().as_secs_f64();

    let dir = &cfg.output;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let marker = dir.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(io_err(&marker))?;
    }
    for a in &artifacts {
        write(&dir.join(&a.name), &a.bytes)?;
    }
    let manifest = json!({
        "manifest_version": 1,
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cfg.payload.key(),
        "seed": cfg.seed,
        "workers": cfg.workers,
        "format": cfg.format,
        "wall_time_seconds": wall,
        "outputs": artifacts.iter().map(|a| a.name.clone()).collect::<Vec<_>>(),
        "config": cfg.echo(),
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&dir.join(MANIFEST), text.as_bytes())
}

fn mark_failure(dir: &Path, err: &CliError) {
    if fs::create_dir_all(dir).is_ok() {
        let _ = fs::write(dir.join(FAILURE_MARKER), format!("{err}\n"));
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let over = Overrides {
        seed: args.seed,
        workers: args.workers,
        format: args.format,
        output: args.out.clone(),
    };
    let parsed = fs::read_to_string(&args.config)
        .map_err(io_err(&args.config))
        .and_then(|text| ExperimentConfig::parse(&text, &over));
    let result = match &parsed {
        Ok(cfg) => run(cfg),
        Err(_) => Ok(()),
    };
    let err = match (parsed, result) {
        (Ok(_), Ok(())) => return ExitCode::SUCCESS,
        (Err(e), _) => (e, args.out.clone()),
        (Ok(cfg), Err(e)) => (e, Some(cfg.output)),
    };
    let (err, dir) = err;
    eprintln!("zeno-schur: {err}");
    if let Some(dir) = dir {
        mark_failure(&dir, &err);
    }
    ExitCode::from(err.exit_code() as u8)
}

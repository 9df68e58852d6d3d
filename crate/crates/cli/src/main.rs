//! `oei`: run batch Bayesian optimization experiments, check the acquisition's
//! numerical invariants, time it, and plot the results.
//!
//! Exit codes: 0 success, 1 runtime or validation failure, 2 usage or config
//! error. `OEI_BO_THREADS` caps the worker pool.

mod bench;
mod config;
mod plot;
mod run;
mod svg;
mod validate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::RunOverrides;
use crate::plot::PlotKind;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "oei", version, about = "Batch Bayesian optimization with the optimistic expected improvement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded BO experiments and write runs.csv, summary.json and manifest.json.
    Run {
        /// JSON file with any of these flags and BO settings; flags win.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        function: Option<String>,
        /// oei, random, constant-liar-ei or batch-lcb.
        #[arg(long)]
        acquisition: Option<String>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        initial_points: Option<usize>,
        /// Multistart restarts for both hyperparameter fitting and acquisition.
        #[arg(long)]
        restarts: Option<usize>,
        /// Fill the wall_time_s column. Timings make runs.csv differ between reruns.
        #[arg(long)]
        record_wall_time: bool,
    },
    /// Run one property suite; exits 1 and prints the failing instances as JSON on any failure.
    Validate {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the number of random cases.
        #[arg(long)]
        cases: Option<usize>,
        /// Also write the full report here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Time acquisition evaluations and warm starts over batch sizes; writes timing.csv.
    BenchTiming {
        #[arg(long, value_delimiter = ',', default_value = "2,3,6,10,20,40")]
        batch_sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// OEI and Monte-Carlo EI along a random line through a 5-point batch; writes linescan.csv.
    Linescan {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        #[arg(long, default_value_t = 100_000)]
        mc_samples: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Render SVG from the CSV files in the input directories.
    Plot {
        /// Directory holding runs.csv, linescan.csv or timing.csv. Repeat to overlay runs.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Defaults to `<first input>/<kind>.svg`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("OEI_BO_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("OEI_BO_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            function,
            acquisition,
            batch_size,
            iterations,
            runs,
            seed,
            out_dir,
            initial_points,
            restarts,
            record_wall_time,
        } => {
            let flags = RunOverrides {
                function,
                acquisition,
                batch_size,
                iterations,
                runs,
                seed,
                out_dir,
                initial_points,
                restarts,
                record_wall_time,
            };
            let resolved = config::resolve(config.as_deref(), flags)?;
            run::run(&resolved, config.as_deref())
        }
        Command::Validate { suite, seed, cases, out_dir } => validate::validate(&suite, seed, cases, out_dir.as_deref()),
        Command::BenchTiming { batch_sizes, repeats, seed, out_dir } => {
            bench::bench_timing(&batch_sizes, repeats, seed, &out_dir)
        }
        Command::Linescan { seed, samples, mc_samples, out_dir } => bench::linescan(seed, samples, mc_samples, &out_dir),
        Command::Plot { input, kind, output } => plot::plot(&input, kind, output.as_deref()).map(|_| ()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Runtime(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}

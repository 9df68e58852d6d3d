use std::path::{Path, PathBuf};

use oei_core::bo::{self, derive_seed, ExperimentRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::config::RunConfig;
use crate::{create_dir, write_json, CliError};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRow {
    pub run_id: usize,
    pub iteration: usize,
    pub evaluations: usize,
    pub incumbent: f64,
    pub regret: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub solver_iters: usize,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub runs: usize,
    pub function: String,
    pub acquisition: String,
    pub run_seeds: Vec<u64>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SummaryRow {
    pub iteration: usize,
    pub runs: usize,
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
}

/// Per-iteration quartiles of regret, or of the incumbent when the objective
/// has no known minimum.
#[derive(Debug, Serialize, PartialEq)]
pub struct Summary {
    pub metric: String,
    pub iterations: Vec<SummaryRow>,
}

pub fn run(config: &RunConfig, config_path: Option<&Path>) -> Result<(), CliError> {
    let objective = bo::benchmark(&config.function, config.bo.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    create_dir(&config.out_dir)?;
    let run_seeds: Vec<u64> = (0..config.runs as u64).map(|r| derive_seed(config.bo.seed, r)).collect();

    let outcomes: Vec<Result<ExperimentRecord, String>> = run_seeds
        .par_iter()
        .map(|&seed| {
            let bo_config = bo::BoConfig { seed, ..config.bo.clone() };
            bo::run(&objective, &bo_config).map_err(|e| e.to_string())
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (run_id, outcome) in outcomes.iter().enumerate() {
        let record = match outcome {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("run {run_id}: {e}"));
                continue;
            }
        };
        if let Some(reason) = &record.aborted {
            failures.push(format!("run {run_id}: {reason}"));
        }
        rows.extend(record.rows.iter().map(|r| RunRow {
            run_id,
            iteration: r.iteration,
            evaluations: r.evaluations,
            incumbent: r.incumbent,
            regret: r.regret,
            wall_time_s: config.record_wall_time.then_some(r.wall_time_s),
            solver_iters: r.solver_iterations,
        }));
    }

    write_rows(&config.out_dir.join("runs.csv"), &rows)?;
    write_json(&config.out_dir.join("summary.json"), &summarize(&rows))?;
    let manifest = RunManifest {
        config: config_path.map(Path::to_path_buf),
        out_dir: config.out_dir.clone(),
        seed: config.bo.seed,
        runs: config.runs,
        function: config.function.clone(),
        acquisition: config.bo.acquisition.name().to_string(),
        run_seeds,
    };
    write_json(&config.out_dir.join("manifest.json"), &manifest)?;

    if failures.is_empty() {
        println!("{} runs of {} on {}: {} rows in {}", config.runs, manifest.acquisition, config.function, rows.len(), config.out_dir.display());
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{} run(s) stopped early; partial results kept\n{}", failures.len(), failures.join("\n"))))
    }
}

pub fn summarize(rows: &[RunRow]) -> Summary {
    let use_regret = !rows.is_empty() && rows.iter().all(|r| r.regret.is_some());
    let last = rows.iter().map(|r| r.iteration).max();
    let iterations = last
        .map(|last| {
            (0..=last)
                .filter_map(|t| {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.iteration == t)
                        .map(|r| if use_regret { r.regret.unwrap_or(f64::NAN) } else { r.incumbent })
                        .collect();
                    if vals.is_empty() {
                        return None;
                    }
                    let runs = vals.len();
                    let mut data = Data::new(vals);
                    Some(SummaryRow {
                        iteration: t,
                        runs,
                        median: data.quantile(0.5),
                        lower_quartile: data.quantile(0.25),
                        upper_quartile: data.quantile(0.75),
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    Summary { metric: if use_regret { "regret" } else { "incumbent" }.into(), iterations }
}

fn write_rows(path: &Path, rows: &[RunRow]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    if rows.is_empty() {
        w.write_record(["run_id", "iteration", "evaluations", "incumbent", "regret", "wall_time_s", "solver_iters"])
            .map_err(io)?;
    }
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

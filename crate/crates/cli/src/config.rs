//! JSON run configuration. The file holds the `run` flags plus any
//! [`BoConfig`] field; command-line flags override file values.
//!
//! ```json
//! {
//!   "function": "six-hump-camel",
//!   "runs": 20,
//!   "out_dir": "out/camel-oei",
//!   "record_wall_time": false,
//!   "acquisition": "oei",
//!   "batch_size": 5,
//!   "iterations": 10,
//!   "seed": 1,
//!   "sdp": { "method": "interior-point", "tol": 1e-7 }
//! }
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use oei_core::bo::{Acquisition, BoConfig, BENCHMARK_NAMES};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Keys the config file may hold besides the [`BoConfig`] fields.
const RUN_KEYS: [&str; 4] = ["function", "runs", "out_dir", "record_wall_time"];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFields {
    function: Option<String>,
    runs: Option<usize>,
    out_dir: Option<PathBuf>,
    record_wall_time: Option<bool>,
}

/// Flags given on the command line; `None` leaves the file or default value.
#[derive(Debug, Default, Clone)]
pub struct RunOverrides {
    pub function: Option<String>,
    pub acquisition: Option<String>,
    pub batch_size: Option<usize>,
    pub iterations: Option<usize>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub initial_points: Option<usize>,
    pub restarts: Option<usize>,
    pub record_wall_time: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub function: String,
    pub runs: usize,
    pub out_dir: PathBuf,
    pub record_wall_time: bool,
    pub bo: BoConfig,
}

pub fn resolve(path: Option<&Path>, flags: RunOverrides) -> Result<RunConfig, CliError> {
    let (fields, mut bo) = match path {
        Some(p) => read_file(p)?,
        None => (RunFields::default(), BoConfig::default()),
    };
    if let Some(name) = &flags.acquisition {
        bo.acquisition = Acquisition::parse(name)
            .ok_or_else(|| CliError::Usage(format!("unknown acquisition `{name}` (oei, random, constant-liar-ei, batch-lcb)")))?;
    }
    if let Some(v) = flags.batch_size {
        bo.batch_size = v;
    }
    if let Some(v) = flags.iterations {
        bo.iterations = v;
    }
    if let Some(v) = flags.seed {
        bo.seed = v;
    }
    if let Some(v) = flags.initial_points {
        bo.initial_points = v;
    }
    if let Some(v) = flags.restarts {
        bo.hyper_restarts = v;
        bo.acquisition_restarts = v;
    }
    bo.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let function = flags
        .function
        .or(fields.function)
        .ok_or_else(|| CliError::Usage("no objective: pass --function or set `function` in the config".into()))?;
    if !BENCHMARK_NAMES.contains(&function.as_str()) {
        return Err(CliError::Usage(format!("unknown function `{function}` (one of {})", BENCHMARK_NAMES.join(", "))));
    }
    let runs = flags.runs.or(fields.runs).unwrap_or(1);
    if runs == 0 {
        return Err(CliError::Usage("runs must be >= 1".into()));
    }
    Ok(RunConfig {
        function,
        runs,
        out_dir: flags.out_dir.or(fields.out_dir).unwrap_or_else(|| PathBuf::from(".")),
        record_wall_time: flags.record_wall_time || fields.record_wall_time.unwrap_or(false),
        bo,
    })
}

fn read_file(path: &Path) -> Result<(RunFields, BoConfig), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::Usage(format!("{}: {e}", path.display()));
    let value: Value = serde_json::from_str(&text).map_err(bad)?;
    let Value::Object(map) = value else {
        return Err(CliError::Usage(format!("{}: expected a JSON object", path.display())));
    };

    let bo_keys: BTreeSet<String> = match serde_json::to_value(BoConfig::default()) {
        Ok(Value::Object(m)) => m.into_iter().map(|(k, _)| k).collect(),
        _ => unreachable!("BoConfig serializes to an object"),
    };
    let (mut run_part, mut bo_part) = (Map::new(), Map::new());
    for (key, v) in map {
        if RUN_KEYS.contains(&key.as_str()) {
            run_part.insert(key, v);
        } else if bo_keys.contains(&key) {
            bo_part.insert(key, v);
        } else {
            return Err(CliError::Usage(format!("{}: unknown key `{key}`", path.display())));
        }
    }
    let fields: RunFields = serde_json::from_value(Value::Object(run_part)).map_err(bad)?;
    let bo: BoConfig = serde_json::from_value(Value::Object(bo_part)).map_err(bad)?;
    Ok((fields, bo))
}

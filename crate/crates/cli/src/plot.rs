use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use oei_core::validation::LineScanPoint;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use statrs::statistics::{Data, OrderStatistics};

use crate::run::RunRow;
use crate::svg::{Chart, Series};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    Regret,
    Linescan,
    Timing,
}

impl PlotKind {
    fn file(self) -> &'static str {
        match self {
            PlotKind::Regret => "runs.csv",
            PlotKind::Linescan => "linescan.csv",
            PlotKind::Timing => "timing.csv",
        }
    }

    fn name(self) -> &'static str {
        match self {
            PlotKind::Regret => "regret",
            PlotKind::Linescan => "linescan",
            PlotKind::Timing => "timing",
        }
    }
}

/// The plotted columns of `timing.csv`.
#[derive(Debug, Deserialize)]
struct TimingCsv {
    batch_size: usize,
    mean_value_grad_seconds: f64,
    mean_hessian_seconds: f64,
}

#[derive(Debug, Deserialize)]
struct ManifestLabel {
    function: String,
    acquisition: String,
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let bad = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(bad)?;
    let rows = reader.deserialize().collect::<Result<Vec<T>, _>>().map_err(bad)?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

pub fn plot(inputs: &[PathBuf], kind: PlotKind, output: Option<&Path>) -> Result<PathBuf, CliError> {
    let first = inputs.first().ok_or_else(|| CliError::Usage("at least one --input is required".into()))?;
    let chart = match kind {
        PlotKind::Regret => regret_chart(inputs)?,
        PlotKind::Linescan => linescan_chart(&read_csv(&first.join(kind.file()))?),
        PlotKind::Timing => timing_chart(&read_csv(&first.join(kind.file()))?),
    };
    let out = output.map(Path::to_path_buf).unwrap_or_else(|| first.join(format!("{}.svg", kind.name())));
    std::fs::write(&out, chart.render()).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(out)
}

fn regret_chart(inputs: &[PathBuf]) -> Result<Chart, CliError> {
    let tables: Vec<(String, Vec<RunRow>)> = inputs
        .iter()
        .map(|dir| {
            let rows: Vec<RunRow> = read_csv(&dir.join("runs.csv"))?;
            Ok((label_for(dir), rows))
        })
        .collect::<Result<_, CliError>>()?;
    let use_regret = tables.iter().flat_map(|(_, r)| r).all(|r| r.regret.is_some());
    let metric = |r: &RunRow| if use_regret { r.regret.unwrap_or(f64::NAN) } else { r.incumbent };

    let groups = tables
        .iter()
        .map(|(label, rows)| {
            let mut by_iteration: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for r in rows {
                by_iteration.entry(r.iteration).or_default().push(metric(r));
            }
            let median: Vec<(f64, f64)> =
                by_iteration.iter().map(|(&t, v)| (t as f64, Data::new(v.clone()).quantile(0.5))).collect();
            let scatter: Vec<(f64, f64)> = rows.iter().map(|r| (r.iteration as f64, metric(r))).collect();
            vec![
                Series::Scatter { label: format!("{label} runs"), points: scatter },
                Series::Line { label: format!("{label} median"), points: median },
            ]
        })
        .collect();
    Ok(Chart {
        title: if use_regret { "Simple regret" } else { "Best observed value" }.into(),
        x_label: "iteration".into(),
        y_label: if use_regret { "regret" } else { "incumbent" }.into(),
        log_y: use_regret,
        groups,
        ..Chart::default()
    })
}

/// The function and acquisition from the run manifest, else the directory name.
fn label_for(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("manifest.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<ManifestLabel>(&t).ok())
        .map(|m| format!("{} / {}", m.acquisition, m.function))
        .unwrap_or_else(|| dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()))
}

fn linescan_chart(points: &[LineScanPoint]) -> Chart {
    let oei = points.iter().map(|p| (p.t, p.oei)).collect();
    let mc = points.iter().map(|p| (p.t, p.mc)).collect();
    let lower = points.iter().map(|p| (p.t, p.mc - 3.0 * p.mc_stderr)).collect();
    let upper = points.iter().map(|p| (p.t, p.mc + 3.0 * p.mc_stderr)).collect();
    Chart {
        title: "Acquisition along a line through the batch".into(),
        x_label: "t".into(),
        y_label: "expected improvement".into(),
        groups: vec![
            vec![Series::Line { label: "OEI".into(), points: oei }],
            vec![
                Series::Band { label: "MC-EI +- 3 s.e.".into(), lower, upper },
                Series::Line { label: "MC-EI".into(), points: mc },
            ],
        ],
        ..Chart::default()
    }
}

fn timing_chart(rows: &[TimingCsv]) -> Chart {
    let series = |label: &str, f: fn(&TimingCsv) -> f64| {
        vec![Series::Line { label: label.into(), points: rows.iter().map(|r| (r.batch_size as f64, f(r))).collect() }]
    };
    Chart {
        title: "Acquisition evaluation time".into(),
        x_label: "batch size".into(),
        y_label: "seconds per evaluation".into(),
        log_x: true,
        log_y: true,
        groups: vec![
            series("value + gradient", |r| r.mean_value_grad_seconds),
            series("with Hessian", |r| r.mean_hessian_seconds),
        ],
    }
}


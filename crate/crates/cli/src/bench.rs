use std::path::Path;

use oei_core::sdp::SdpSettings;
use oei_core::validation::{band_violations, jump_violations, line_scan, time_batch_size, LineScanPoint, TimingRow};

use crate::{create_dir, write_csv, CliError};

pub fn bench_timing(batch_sizes: &[usize], repeats: usize, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    if batch_sizes.is_empty() || batch_sizes.contains(&0) {
        return Err(CliError::Usage("batch sizes must be a non-empty list of positive integers".into()));
    }
    create_dir(out_dir)?;
    let path = out_dir.join("timing.csv");
    let mut rows: Vec<TimingRow> = Vec::with_capacity(batch_sizes.len());
    for &k in batch_sizes {
        let row = time_batch_size(k, repeats, seed, SdpSettings::default());
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                // Keep the sizes that finished.
                write_csv(&path, &rows)?;
                return Err(CliError::Runtime(format!("batch size {k}: {e}")));
            }
        };
        println!(
            "k={:>3}  value+grad {:.4e} s  hessian {:.4e} s  warm/cold iterations {:.3}",
            k, row.mean_value_grad_seconds, row.mean_hessian_seconds, row.warm_vs_cold_iteration_ratio
        );
        rows.push(row);
    }
    write_csv(&path, &rows)
}

pub fn linescan(seed: u64, samples: usize, mc_samples: usize, out_dir: &Path) -> Result<(), CliError> {
    if samples < 2 || mc_samples < 2 {
        return Err(CliError::Usage("samples and mc-samples must be >= 2".into()));
    }
    create_dir(out_dir)?;
    let scan = line_scan(seed, samples, mc_samples).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_csv(&out_dir.join("linescan.csv"), &scan.points)?;
    let jumps = jump_violations(&scan.points);
    let above = band_violations(&scan.points);
    println!(
        "line scan seed {seed}: {} samples after {} redraw(s), {} jump(s), {} sample(s) above the MC band",
        scan.points.len(),
        scan.redraws,
        jumps.len(),
        above.len()
    );
    let describe = |j: &usize| {
        let p: &LineScanPoint = &scan.points[*j];
        format!("t={:.6} oei={:.6e} mc={:.6e}+-{:.2e}", p.t, p.oei, p.mc, p.mc_stderr)
    };
    for j in jumps.iter().chain(&above) {
        eprintln!("  {}", describe(j));
    }
    if jumps.is_empty() && above.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime("line scan violates continuity or the MC band".into()))
    }
}

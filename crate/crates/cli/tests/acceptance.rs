//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use oei_core::gp::MomentMatrix;
use oei_core::oei::OeiAcquisition;
use oei_core::sdp::{SdpProblem, SdpSettings, SdpSolver};
use oei_core::validation::{
    band_violations, jump_violations, line_scan, run_suite_sized, timing_instance, trajectory_iterations, Suite,
    SuiteReport, SuiteSize,
};

const CLOSED_FORM_TOL: f64 = 1e-6;
const KKT_TOL: f64 = 1e-7;
const RANK_ONE_TOL: f64 = 1e-6;
const GRADIENT_TOL: f64 = 1e-4;
const HESSIAN_TOL: f64 = 1e-3;
const DISTRIBUTION_TOL: f64 = 1e-5;
const WARM_RATIO: f64 = 0.7;
const SEED: u64 = 2024;

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { ok, detail: detail.into() }
}

/// Runs `check`, failing it when it errors or takes longer than `limit_s`.
fn criterion(n: usize, name: &str, limit_s: Option<f64>, check: impl FnOnce() -> Result<Verdict, String>) -> bool {
    let start = Instant::now();
    let result = check();
    let secs = start.elapsed().as_secs_f64();
    let (mut ok, mut detail) = match result {
        Ok(v) => (v.ok, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(limit) = limit_s {
        if secs >= limit {
            ok = false;
            detail = format!("{detail}; over the {limit} s limit");
        }
    }
    println!("{} {n:>2} {name}: {detail} ({secs:.1} s)", if ok { "PASS" } else { "FAIL" });
    ok
}

fn worst(report: &SuiteReport, name: &str) -> f64 {
    report.worst.iter().find(|(n, _)| n == name).map_or(f64::NAN, |(_, v)| *v)
}

fn suite(suite: Suite, size: SuiteSize) -> Result<SuiteReport, String> {
    run_suite_sized(suite, SEED, size).map_err(|e| e.to_string())
}

fn failures(report: &SuiteReport) -> String {
    let mut names: Vec<&str> = report.failures.iter().map(|f| f.check.as_str()).collect();
    names.dedup();
    format!("{} cases, {} checks, {} failed {names:?}", report.cases, report.checks, report.failures.len())
}

fn closed_form() -> Result<Verdict, String> {
    let mut worst_err: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let d = -3.0 + 6.0 * i as f64 / 9.0;
            let s = 0.1 + 2.9 * j as f64 / 9.0;
            let incumbent = -0.4;
            let omega = MomentMatrix::from_moments(&DVector::from_element(1, incumbent + d), &DMatrix::from_element(1, 1, s * s))
                .map_err(|e| e.to_string())?;
            let problem = SdpProblem::new(&omega, incumbent).map_err(|e| e.to_string())?;
            let sol = SdpSolver::new(SdpSettings::default()).solve(&problem, None).map_err(|e| e.to_string())?;
            worst_err = worst_err.max((sol.value - (d - (d * d + s * s).sqrt()) / 2.0).abs());
        }
    }
    Ok(verdict(worst_err <= CLOSED_FORM_TOL, format!("max error {worst_err:.2e} on 100 points")))
}

fn duality() -> Result<Verdict, String> {
    let r = suite(Suite::Duality, SuiteSize { cases: 200, ..SuiteSize::default_for(Suite::Duality) })?;
    let kkt = ["primal-residual", "dual-residual", "duality-gap"].iter().map(|n| worst(&r, n)).fold(0.0, f64::max);
    let rank = worst(&r, "rank-one-defect");
    let ok = r.passed() && r.cases == 200 && kkt <= KKT_TOL && rank <= RANK_ONE_TOL;
    Ok(verdict(ok, format!("{}; worst KKT residual {kkt:.2e}, rank-one defect {rank:.2e}", failures(&r))))
}

fn gradients() -> Result<Verdict, String> {
    let size = SuiteSize { cases: 50, extra_cases: 50, hessian_cases: 0, ..SuiteSize::default_for(Suite::Gradients) };
    let r = suite(Suite::Gradients, size)?;
    let err = r.worst.iter().filter(|(n, _)| n.starts_with("gradient")).map(|(_, v)| *v).fold(0.0, f64::max);
    let ok = r.passed() && r.cases == 100 && err <= GRADIENT_TOL;
    Ok(verdict(ok, format!("{}; worst relative error {err:.2e}", failures(&r))))
}

fn hessians() -> Result<Verdict, String> {
    let size = SuiteSize { cases: 0, extra_cases: 0, hessian_cases: 20, ..SuiteSize::default_for(Suite::Gradients) };
    let r = suite(Suite::Gradients, size)?;
    let err = worst(&r, "hessian");
    let ok = r.passed() && r.cases == 20 && err <= HESSIAN_TOL;
    Ok(verdict(ok, format!("{}; worst relative error {err:.2e}", failures(&r))))
}

fn sandwich() -> Result<Verdict, String> {
    let size = SuiteSize { cases: 500, mc_samples: 200_000, ..SuiteSize::default_for(Suite::Sandwich) };
    let r = suite(Suite::Sandwich, size)?;
    let violations = r.failures.iter().filter(|f| f.check == "oei-below-mc").count();
    Ok(verdict(r.passed() && r.cases == 500, format!("{}; {violations} violations", failures(&r))))
}

fn distribution() -> Result<Verdict, String> {
    let r = suite(Suite::Distribution, SuiteSize { cases: 100, ..SuiteSize::default_for(Suite::Distribution) })?;
    let (moments, value) = (worst(&r, "moment-reconstruction"), worst(&r, "expected-improvement-vs-value"));
    let ok = r.passed() && r.cases == 100 && moments <= DISTRIBUTION_TOL && value <= DISTRIBUTION_TOL;
    Ok(verdict(ok, format!("{}; moments {moments:.2e}, E[g] {value:.2e}", failures(&r))))
}

/// Fastest of a few cold value-and-gradient evaluations, which is less
/// sensitive to scheduler noise than the mean.
fn evaluation_seconds(k: usize) -> Result<f64, String> {
    let (model, x) = timing_instance(k, SEED).map_err(|e| e.to_string())?;
    let acq = OeiAcquisition::new(&model, 2.0 * 2f64.sqrt());
    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let start = Instant::now();
        let e = acq.evaluate(&x, &mut SdpSolver::new(SdpSettings::default()), true, false).map_err(|e| e.to_string())?;
        best = best.min(start.elapsed().as_secs_f64());
        if !e.solution.converged {
            return Err(format!("k={k} did not converge"));
        }
    }
    Ok(best)
}

fn timing() -> Result<Verdict, String> {
    let ks = [2, 3, 6, 10, 20, 40];
    let secs = ks.iter().map(|&k| evaluation_seconds(k)).collect::<Result<Vec<_>, _>>()?;
    let monotone = secs.windows(2).all(|w| w[1] >= w[0]);
    let (t20, t40) = (secs[4], secs[5]);
    let table: Vec<String> = ks.iter().zip(&secs).map(|(k, s)| format!("k={k} {s:.3}s")).collect();
    Ok(verdict(monotone && t20 < 1.0 && t40 < 5.0, format!("{}; monotone {monotone}", table.join(", "))))
}

fn warm_start() -> Result<Verdict, String> {
    let (model, x) = timing_instance(10, SEED).map_err(|e| e.to_string())?;
    let it = trajectory_iterations(&model, &x, SEED, SdpSettings::default()).map_err(|e| e.to_string())?;
    let ratio = it.ratio();
    Ok(verdict(
        ratio <= WARM_RATIO,
        format!("k=10: cold {:.1}, warm {:.1} iterations, ratio {ratio:.2}", it.mean_cold, it.mean_warm),
    ))
}

fn continuity() -> Result<Verdict, String> {
    let scan = line_scan(SEED, 101, 100_000).map_err(|e| e.to_string())?;
    let (jumps, band) = (jump_violations(&scan.points).len(), band_violations(&scan.points).len());
    Ok(verdict(jumps == 0 && band == 0, format!("{} samples, {jumps} jumps, {band} above the MC band", scan.points.len())))
}

fn oei(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_oei")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
    }
}

/// Per-iteration median regret across runs, read from runs.csv.
fn median_regret(dir: &Path) -> Result<Vec<f64>, String> {
    let text = std::fs::read_to_string(dir.join("runs.csv")).map_err(|e| e.to_string())?;
    let mut by_iteration: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let t: usize = f[1].parse().map_err(|_| format!("bad row {line}"))?;
        let regret: f64 = f[4].parse().map_err(|_| format!("bad row {line}"))?;
        if by_iteration.len() < t {
            by_iteration.resize(t, Vec::new());
        }
        by_iteration[t - 1].push(regret);
    }
    Ok(by_iteration
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
        })
        .collect())
}

fn regret(work: &Path) -> Result<Verdict, String> {
    let mut ok = true;
    let mut parts = Vec::new();
    for function in ["six-hump-camel", "cosine-mixture"] {
        let mut finals = Vec::new();
        for acq in ["oei", "random"] {
            let dir = work.join(format!("{function}-{acq}"));
            oei(&[
                "run", "--function", function, "--acquisition", acq, "--batch-size", "5", "--iterations", "10", "--runs",
                "20", "--seed", "1", "--out-dir", dir.to_str().unwrap(),
            ])?;
            let medians = median_regret(&dir)?;
            if medians.len() != 10 {
                return Err(format!("{function} {acq}: {} iterations", medians.len()));
            }
            if acq == "oei" {
                ok &= medians.windows(2).all(|w| w[1] <= w[0]);
            }
            finals.push(*medians.last().unwrap());
        }
        ok &= finals[0] <= finals[1];
        parts.push(format!("{function} final median regret OEI {:.3e} vs Random {:.3e}", finals[0], finals[1]));
    }
    Ok(verdict(ok, parts.join("; ")))
}

fn determinism(work: &Path) -> Result<Verdict, String> {
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let dir = work.join(format!("determinism-{name}"));
        oei(&[
            "run", "--function", "six-hump-camel", "--acquisition", "oei", "--batch-size", "3", "--iterations", "3",
            "--runs", "3", "--seed", "11", "--out-dir", dir.to_str().unwrap(),
        ])?;
        files.push(std::fs::read(dir.join("runs.csv")).map_err(|e| e.to_string())?);
    }
    Ok(verdict(files[0] == files[1], format!("{} bytes each, identical {}", files[0].len(), files[0] == files[1])))
}

fn main() {
    let work = std::env::temp_dir().join(format!("oei-acceptance-{}", std::process::id()));
    let results = [
        criterion(1, "closed form at k=1", Some(10.0), closed_form),
        criterion(2, "duality and KKT certificates", Some(60.0), duality),
        criterion(3, "gradient vs finite differences", Some(60.0), gradients),
        criterion(4, "Hessian vs finite differences", Some(120.0), hessians),
        criterion(5, "lower bound below Monte-Carlo EI", Some(300.0), sandwich),
        criterion(6, "worst-case distribution", Some(60.0), distribution),
        criterion(7, "timing scaling", None, timing),
        criterion(8, "warm-start benefit", None, warm_start),
        criterion(9, "line-scan continuity and MC band", None, continuity),
        criterion(10, "desk-scale regret", Some(1800.0), || regret(&work)),
        criterion(11, "run determinism", None, || determinism(&work)),
    ];
    let _ = std::fs::remove_dir_all(&work);
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed} of {} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

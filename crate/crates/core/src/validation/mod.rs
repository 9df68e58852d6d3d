//! Randomized property suites. Each case draws its own instance from a seed
//! derived from the suite seed and the case index, so a failure can be replayed
//! from the JSON record alone and cases can run in parallel without changing
//! the verdict.

mod linescan;
mod timing;

pub use linescan::{band_violations, jump_violations, line_scan, LineScan, LineScanPoint, JUMP_FACTOR, LINESCAN_BATCH};
pub use timing::{
    time_batch_size, timing_instance, trajectory_iterations, TimingRow, TrajectoryIterations, TRAJECTORY_LENGTH,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::bo::{derive_seed, mc_expected_improvement, DEFAULT_MC_SAMPLES};
use crate::gp::{Dataset, GpModel, Kernel, MeanFunction, MomentMatrix};
use crate::linalg::{max_eigenvalue, rows};
use crate::oei::{worst_case_distribution, HessianMethod, OeiAcquisition};
use crate::sdp::{SdpProblem, SdpSettings, SdpSolution, SdpSolver};
use crate::{Error, Result};

/// Residual bound for converged solves.
pub const SOLVER_TOL: f64 = 1e-7;
/// Bound on `lambda_2 / lambda_1` of the active dual matrices.
pub const RANK_ONE_TOL: f64 = 1e-6;
/// Relative gradient error against central differences.
pub const GRADIENT_TOL: f64 = 1e-4;
/// Relative Hessian error against central differences of the gradient.
pub const HESSIAN_TOL: f64 = 1e-3;
/// Moment reconstruction, relative to `||Omega||_F`, and `E[g]` against the value.
pub const DISTRIBUTION_TOL: f64 = 1e-5;

/// Relative central-difference step, scaled by `1 + |x|` per coordinate.
fn fd_step() -> f64 {
    f64::EPSILON.cbrt()
}

const MAX_BATCH_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// OEI never exceeds the Monte-Carlo expected improvement.
    Sandwich,
    /// Gradient and Hessian of the acquisition against finite differences.
    Gradients,
    /// KKT certificates, negative definite leading block, rank-one duals.
    Duality,
    /// The worst-case distribution reproduces the moments and the value.
    Distribution,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Sandwich, Suite::Gradients, Suite::Duality, Suite::Distribution];

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Sandwich => "sandwich",
            Suite::Gradients => "gradients",
            Suite::Duality => "duality",
            Suite::Distribution => "distribution",
        }
    }
}

/// Everything needed to rebuild one random case.
#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Instance {
    Moments {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
        incumbent: f64,
    },
    Batch {
        inputs: Vec<Vec<f64>>,
        values: Vec<f64>,
        kernel_variance: f64,
        lengthscale: f64,
        noise: f64,
        batch: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Failure {
    pub case: usize,
    pub case_seed: u64,
    pub check: String,
    pub detail: String,
    pub instance: Instance,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub cases: usize,
    pub checks: usize,
    pub failures: Vec<Failure>,
    /// Largest observed value of each measured quantity, for reporting.
    pub worst: Vec<(String, f64)>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Case counts and Monte-Carlo budget.
#[derive(Debug, Clone, Copy)]
pub struct SuiteSize {
    pub cases: usize,
    /// Second group of cases (3-point gradients); ignored by the other suites.
    pub extra_cases: usize,
    /// Hessian cases of the gradient suite.
    pub hessian_cases: usize,
    pub mc_samples: usize,
}

impl SuiteSize {
    pub fn default_for(suite: Suite) -> Self {
        let cases = match suite {
            Suite::Sandwich => 500,
            Suite::Gradients => 50,
            Suite::Duality => 200,
            Suite::Distribution => 100,
        };
        Self { cases, extra_cases: 50, hessian_cases: 20, mc_samples: DEFAULT_MC_SAMPLES }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    run_suite_sized(suite, seed, SuiteSize::default_for(suite))
}

pub fn run_suite_sized(suite: Suite, seed: u64, size: SuiteSize) -> Result<SuiteReport> {
    let outcomes: Vec<CaseOutcome> = match suite {
        Suite::Sandwich => run_cases(seed, 0, size.cases, |s| sandwich_case(s, SANDWICH_K, size.mc_samples))?,
        Suite::Duality => run_cases(seed, 0, size.cases, |s| duality_case(s, DUALITY_K))?,
        Suite::Distribution => run_cases(seed, 0, size.cases, |s| distribution_case(s, SANDWICH_K))?,
        Suite::Gradients => {
            let mut all = run_cases(seed, 0, size.cases, |s| gradient_case(s, 2))?;
            all.extend(run_cases(seed, size.cases, size.extra_cases, |s| gradient_case(s, 3))?);
            let start = size.cases + size.extra_cases;
            all.extend(run_cases(seed, start, size.hessian_cases, hessian_case)?);
            all
        }
    };
    let mut report = SuiteReport { suite, seed, cases: outcomes.len(), checks: 0, failures: Vec::new(), worst: Vec::new() };
    for o in outcomes {
        report.checks += o.checks;
        for (name, v) in o.measured {
            match report.worst.iter_mut().find(|(n, _)| *n == name) {
                Some((_, w)) => *w = w.max(v),
                None => report.worst.push((name, v)),
            }
        }
        report.failures.extend(o.failures);
    }
    Ok(report)
}

const SANDWICH_K: &[usize] = &[1, 2, 3, 5];
const DUALITY_K: &[usize] = &[2, 3, 5, 10];

struct CaseOutcome {
    checks: usize,
    measured: Vec<(String, f64)>,
    failures: Vec<Failure>,
}

/// Collects checks for one case; `seed` identifies the case for replay.
struct Case {
    case: usize,
    seed: u64,
    instance: Instance,
    outcome: CaseOutcome,
}

impl Case {
    fn new(case: usize, seed: u64, instance: Instance) -> Self {
        Self { case, seed, instance, outcome: CaseOutcome { checks: 0, measured: Vec::new(), failures: Vec::new() } }
    }

    fn check(&mut self, name: &str, ok: bool, detail: impl FnOnce() -> String) {
        self.outcome.checks += 1;
        if !ok {
            self.outcome.failures.push(Failure {
                case: self.case,
                case_seed: self.seed,
                check: name.to_string(),
                detail: detail(),
                instance: self.instance.clone(),
            });
        }
    }

    /// Records `value` and checks `value <= bound`.
    fn bound(&mut self, name: &str, value: f64, bound: f64) {
        self.outcome.measured.push((name.to_string(), value));
        self.check(name, value <= bound, || format!("{value:.3e} exceeds {bound:.3e}"));
    }

    fn fail(&mut self, name: &str, err: &Error) {
        self.check(name, false, || err.to_string());
    }
}

fn run_cases<F>(seed: u64, first: usize, count: usize, case: F) -> Result<Vec<CaseOutcome>>
where
    F: Fn(CaseSeed) -> Result<Case> + Sync,
{
    (first..first + count)
        .into_par_iter()
        .map(|i| case(CaseSeed { index: i, seed: derive_seed(seed, i as u64) }).map(|c| c.outcome))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct CaseSeed {
    index: usize,
    seed: u64,
}

/// Mean `U(-2, 2)`, covariance `s (B B^T / k + 0.05 I)` with Gaussian `B` and
/// `s` log-uniform on `[0.01, 10]`, incumbent `U(-2, 2)`.
pub fn random_moments(rng: &mut impl Rng, k: usize) -> (DVector<f64>, DMatrix<f64>, f64) {
    let mean = DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
    let b = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = 10f64.powf(rng.random_range(-2.0..1.0));
    let mut cov = &b * b.transpose() / k as f64;
    for i in 0..k {
        cov[(i, i)] += 0.05;
    }
    cov *= s;
    (mean, cov, rng.random_range(-2.0..2.0))
}

fn moments_instance(mean: &DVector<f64>, cov: &DMatrix<f64>, incumbent: f64) -> Instance {
    Instance::Moments { mean: mean.iter().copied().collect(), covariance: rows(cov), incumbent }
}

fn pick_k(rng: &mut impl Rng, ks: &[usize]) -> usize {
    ks[rng.random_range(0..ks.len())]
}

fn solve_moments(mean: &DVector<f64>, cov: &DMatrix<f64>, incumbent: f64) -> Result<SdpSolution> {
    let omega = MomentMatrix::from_moments(mean, cov)?;
    let problem = SdpProblem::new(&omega, incumbent)?;
    SdpSolver::new(SdpSettings { tol: SOLVER_TOL, ..SdpSettings::default() }).solve(&problem, None)
}

fn sandwich_case(cs: CaseSeed, ks: &[usize], samples: usize) -> Result<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(cs.seed);
    let k = pick_k(&mut rng, ks);
    let (mean, cov, y) = random_moments(&mut rng, k);
    let mut case = Case::new(cs.index, cs.seed, moments_instance(&mean, &cov, y));
    let sol = match solve_moments(&mean, &cov, y) {
        Ok(s) => s,
        Err(e) => {
            case.fail("solve", &e);
            return Ok(case);
        }
    };
    case.check("converged", sol.converged, || format!("residual {:.3e}", sol.residuals.max()));
    let mc = mc_expected_improvement(&mean, &cov, y, samples, rng.random())?;
    let margin = mc.estimate + 3.0 * mc.standard_error;
    case.check("oei-below-mc", sol.value <= margin, || {
        format!("OEI {:.6e} above MC {:.6e} + 3 x {:.3e}", sol.value, mc.estimate, mc.standard_error)
    });
    case.outcome.measured.push(("oei-minus-mc-bound".into(), sol.value - margin));
    Ok(case)
}

fn duality_case(cs: CaseSeed, ks: &[usize]) -> Result<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(cs.seed);
    let k = pick_k(&mut rng, ks);
    let (mean, cov, y) = random_moments(&mut rng, k);
    let mut case = Case::new(cs.index, cs.seed, moments_instance(&mean, &cov, y));
    let sol = match solve_moments(&mean, &cov, y) {
        Ok(s) => s,
        Err(e) => {
            case.fail("solve", &e);
            return Ok(case);
        }
    };
    case.check("converged", sol.converged, || "iteration limit".into());
    case.bound("primal-residual", sol.residuals.primal, SOLVER_TOL);
    case.bound("dual-residual", sol.residuals.dual, SOLVER_TOL);
    case.bound("duality-gap", sol.residuals.gap, SOLVER_TOL);
    case.bound("value", sol.value, 0.0);
    let block = sol.m_bar.view((0, 0), (k, k)).into_owned();
    let top = max_eigenvalue(&block);
    case.outcome.measured.push(("leading-block-max-eigenvalue".into(), top));
    case.check("leading-block-negative-definite", top < 0.0, || format!("max eigenvalue {top:.3e}"));
    case.bound("rank-one-defect", sol.rank_one_defect, RANK_ONE_TOL);
    Ok(case)
}

fn distribution_case(cs: CaseSeed, ks: &[usize]) -> Result<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(cs.seed);
    let k = pick_k(&mut rng, ks);
    let (mean, cov, y) = random_moments(&mut rng, k);
    let mut case = Case::new(cs.index, cs.seed, moments_instance(&mean, &cov, y));
    let sol = match solve_moments(&mean, &cov, y) {
        Ok(s) => s,
        Err(e) => {
            case.fail("solve", &e);
            return Ok(case);
        }
    };
    let dist = worst_case_distribution(&sol);
    let moment_err = (dist.moment_matrix() - &sol.omega).norm() / sol.omega.norm();
    case.bound("moment-reconstruction", moment_err, DISTRIBUTION_TOL);
    let value_err = (dist.expected_improvement(y) - sol.value).abs();
    case.bound("expected-improvement-vs-value", value_err, DISTRIBUTION_TOL);
    case.check("weights-sum-to-one", dist.complete, || format!("raw weight {:.3e}", dist.raw_weight));
    Ok(case)
}

/// A 1-d SE-kernel model on five points of `[-1, 1]` with Gaussian values.
fn random_model(rng: &mut impl Rng) -> Result<GpModel> {
    let xs: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ys: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
    GpModel::new(
        Dataset::new(DMatrix::from_column_slice(5, 1, &xs), ys)?,
        Kernel::squared_exponential(1.0, 0.3)?,
        MeanFunction::Zero,
        1e-6,
    )
}

fn batch_instance(model: &GpModel, batch: &DMatrix<f64>) -> Instance {
    Instance::Batch {
        inputs: rows(model.dataset().inputs()),
        values: model.dataset().values().to_vec(),
        kernel_variance: model.kernel().variance,
        lengthscale: model.kernel().lengthscale,
        noise: model.noise(),
        batch: rows(batch),
    }
}

/// Uniform batch on `[-1, 1]`, redrawn until the posterior moment matrix is
/// nondegenerate, which the derivative formulas require.
fn random_batch(rng: &mut impl Rng, model: &GpModel, k: usize) -> Result<DMatrix<f64>> {
    for _ in 0..MAX_BATCH_DRAWS {
        let x = DMatrix::from_fn(k, 1, |_, _| rng.random_range(-1.0..1.0));
        let omega = model.moment_matrix(&x)?;
        if SdpProblem::new(&omega, model.incumbent()?).is_ok() {
            return Ok(x);
        }
    }
    Err(Error::InvalidArgument(format!("no nondegenerate {k}-point batch in {MAX_BATCH_DRAWS} draws")))
}

fn solver() -> SdpSolver {
    SdpSolver::new(SdpSettings { tol: SOLVER_TOL, ..SdpSettings::default() })
}

/// `||a - b|| / ||b||`, with `||b||` floored at the tiny scale below which
/// both vectors are indistinguishable from zero.
fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

fn gradient_case(cs: CaseSeed, k: usize) -> Result<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(cs.seed);
    let model = random_model(&mut rng)?;
    let x = random_batch(&mut rng, &model, k)?;
    let mut case = Case::new(cs.index, cs.seed, batch_instance(&model, &x));
    let acq = OeiAcquisition::new(&model, 2.0);
    let mut s = solver();
    let eval = match acq.evaluate(&x, &mut s, true, false) {
        Ok(e) => e,
        Err(e) => {
            case.fail("evaluate", &e);
            return Ok(case);
        }
    };
    let g = eval.gradient.expect("gradient requested");
    let mut fd = vec![0.0; k];
    for j in 0..k {
        let h = fd_step() * (1.0 + x[j].abs());
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[j] += h;
        xm[j] -= h;
        let fp = acq.evaluate(&xp, &mut s, false, false)?.value;
        let fm = acq.evaluate(&xm, &mut s, false, false)?.value;
        fd[j] = (fp - fm) / (2.0 * h);
    }
    let name = if k == 2 { "gradient-2-point" } else { "gradient-3-point" };
    case.bound(name, relative_error(g.as_slice(), &fd), GRADIENT_TOL);
    Ok(case)
}

fn hessian_case(cs: CaseSeed) -> Result<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(cs.seed);
    let model = random_model(&mut rng)?;
    let x = random_batch(&mut rng, &model, 2)?;
    let mut case = Case::new(cs.index, cs.seed, batch_instance(&model, &x));
    let acq = OeiAcquisition::new(&model, 2.0);
    let mut s = solver();
    let eval = match acq.evaluate(&x, &mut s, true, true) {
        Ok(e) => e,
        Err(e) => {
            case.fail("evaluate", &e);
            return Ok(case);
        }
    };
    let h = eval.hessian.expect("Hessian requested");
    let mut fd = DMatrix::zeros(2, 2);
    for j in 0..2 {
        let step = fd_step() * (1.0 + x[j].abs());
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[j] += step;
        xm[j] -= step;
        let gp = acq.evaluate(&xp, &mut s, true, false)?.gradient.expect("gradient requested");
        let gm = acq.evaluate(&xm, &mut s, true, false)?.gradient.expect("gradient requested");
        fd.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    let analytic = eval.hessian_method == Some(HessianMethod::Analytic);
    case.outcome.measured.push(("hessian-fallbacks".into(), if analytic { 0.0 } else { 1.0 }));
    case.bound("hessian", relative_error(h.as_slice(), fd.as_slice()), HESSIAN_TOL);
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: SuiteSize = SuiteSize { cases: 8, extra_cases: 4, hessian_cases: 3, mc_samples: 20_000 };

    #[test]
    fn names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()), Some(s));
        }
        assert_eq!(Suite::parse("nope"), None);
    }

    #[test]
    fn small_suites_pass_and_are_reproducible() {
        for suite in Suite::ALL {
            let a = run_suite_sized(suite, 11, SMALL).unwrap();
            assert!(a.passed(), "{suite:?}: {:?}", a.failures);
            assert!(a.checks >= a.cases);
            let b = run_suite_sized(suite, 11, SMALL).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn failures_serialize_with_the_instance() {
        let f = Failure {
            case: 3,
            case_seed: 9,
            check: "x".into(),
            detail: "y".into(),
            instance: Instance::Moments { mean: vec![0.0], covariance: vec![vec![1.0]], incumbent: 0.0 },
        };
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"kind\":\"moments\"") && s.contains("\"case_seed\":9"));
    }
}

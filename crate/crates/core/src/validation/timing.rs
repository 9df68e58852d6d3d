//! Acquisition timing and warm-start savings on a fixed two-dimensional GP.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::gp::{Dataset, GpModel, Kernel, MeanFunction};
use crate::oei::OeiAcquisition;
use crate::sdp::{SdpProblem, SdpSettings, SdpSolver};
use crate::{Error, Result};

const TRAINING_POINTS: usize = 20;
/// Batches along the warm-start trajectory.
pub const TRAJECTORY_LENGTH: usize = 50;
/// Per-step displacement of each batch coordinate along the trajectory.
const TRAJECTORY_STEP: f64 = 1e-3;
/// Timing loops keep repeating until this much time has passed.
const MIN_TIMED_SECONDS: f64 = 0.25;
const MAX_TIMED_REPEATS: usize = 1000;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TimingRow {
    pub batch_size: usize,
    pub mean_value_grad_seconds: f64,
    pub mean_hessian_seconds: f64,
    pub warm_vs_cold_iteration_ratio: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TrajectoryIterations {
    pub mean_cold: f64,
    pub mean_warm: f64,
}

impl TrajectoryIterations {
    pub fn ratio(&self) -> f64 {
        self.mean_warm / self.mean_cold
    }
}

/// SE model (variance 1, lengthscale 0.3) on 20 uniform points of `[-1, 1]^2`
/// with Gaussian values, and a nondegenerate uniform batch of `k` points.
pub fn timing_instance(k: usize, seed: u64) -> Result<(GpModel, DMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = DMatrix::from_fn(TRAINING_POINTS, 2, |_, _| rng.random_range(-1.0..1.0));
    let ys: Vec<f64> = (0..TRAINING_POINTS).map(|_| rng.sample(StandardNormal)).collect();
    let model = GpModel::new(Dataset::new(xs, ys)?, Kernel::squared_exponential(1.0, 0.3)?, MeanFunction::Zero, 1e-6)?;
    for _ in 0..1000 {
        let x = DMatrix::from_fn(k, 2, |_, _| rng.random_range(-1.0..1.0));
        if SdpProblem::new(&model.moment_matrix(&x)?, model.incumbent()?).is_ok() {
            return Ok((model, x));
        }
    }
    Err(Error::InvalidArgument(format!("no nondegenerate {k}-point batch found")))
}

/// Mean seconds per cold evaluation, repeated at least `repeats` times and
/// until a quarter second has elapsed.
fn mean_seconds(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let start = Instant::now();
    let mut count = 0;
    while count < repeats.max(1) || (start.elapsed().as_secs_f64() < MIN_TIMED_SECONDS && count < MAX_TIMED_REPEATS) {
        f()?;
        count += 1;
    }
    Ok(start.elapsed().as_secs_f64() / count as f64)
}

fn cold_evaluation(model: &GpModel, x: &DMatrix<f64>, hessian: bool, settings: SdpSettings) -> Result<()> {
    let acq = OeiAcquisition::new(model, 2.0 * 2f64.sqrt());
    let e = acq.evaluate(x, &mut SdpSolver::new(settings), true, hessian)?;
    if !e.solution.converged {
        return Err(Error::NotConverged { residual: e.solution.residuals.max() });
    }
    Ok(())
}

/// Solver iterations along 50 nearby batches `X_0 + t D`, `D` Gaussian with
/// scale 1e-3: cold solves versus one solver carrying its warm start.
pub fn trajectory_iterations(model: &GpModel, x0: &DMatrix<f64>, seed: u64, settings: SdpSettings) -> Result<TrajectoryIterations> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = DMatrix::from_fn(x0.nrows(), x0.ncols(), |_, _| TRAJECTORY_STEP * rng.sample::<f64, _>(StandardNormal));
    let incumbent = model.incumbent()?;
    let mut warm = SdpSolver::new(settings);
    let (mut cold_total, mut warm_total) = (0usize, 0usize);
    for t in 0..TRAJECTORY_LENGTH {
        let x = x0 + &d * t as f64;
        let problem = SdpProblem::new(&model.moment_matrix(&x)?, incumbent)?;
        let cold = SdpSolver::new(settings).solve(&problem, None)?;
        let hot = warm.solve(&problem, None)?;
        if !cold.converged || !hot.converged {
            return Err(Error::NotConverged { residual: cold.residuals.max().max(hot.residuals.max()) });
        }
        // The first solve has nothing to start from.
        if t > 0 {
            cold_total += cold.iterations;
            warm_total += hot.iterations;
        }
    }
    let steps = (TRAJECTORY_LENGTH - 1) as f64;
    Ok(TrajectoryIterations { mean_cold: cold_total as f64 / steps, mean_warm: warm_total as f64 / steps })
}

pub fn time_batch_size(k: usize, repeats: usize, seed: u64, settings: SdpSettings) -> Result<TimingRow> {
    let (model, x) = timing_instance(k, seed)?;
    let value_grad = mean_seconds(repeats, || cold_evaluation(&model, &x, false, settings))?;
    let hessian = mean_seconds(repeats, || cold_evaluation(&model, &x, true, settings))?;
    let trajectory = trajectory_iterations(&model, &x, seed ^ 0x5eed, settings)?;
    Ok(TimingRow {
        batch_size: k,
        mean_value_grad_seconds: value_grad,
        mean_hessian_seconds: hessian,
        warm_vs_cold_iteration_ratio: trajectory.ratio(),
    })
}

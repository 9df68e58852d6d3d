//! OEI and Monte-Carlo EI along a line `X_0 + t D` through a five-point batch
//! on the one-dimensional demo posterior (10 observations).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bo::{demo_posterior, derive_seed, mc_expected_improvement};
use crate::oei::OeiAcquisition;
use crate::sdp::{SdpProblem, SdpSettings, SdpSolver};
use crate::{Error, Result};

pub const LINESCAN_BATCH: usize = 5;
const DEMO_OBSERVATIONS: usize = 10;
/// Allowed ratio between a successive-sample jump and `dt` times the larger
/// endpoint slope.
pub const JUMP_FACTOR: f64 = 2.0;
const MAX_T: f64 = 0.25;
const MAX_LINE_DRAWS: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LineScanPoint {
    pub t: f64,
    pub oei: f64,
    /// `d OEI / dt`.
    pub oei_slope: f64,
    pub mc: f64,
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LineScan {
    pub batch: Vec<f64>,
    /// Lines rejected before this one.
    pub redraws: usize,
    pub direction: Vec<f64>,
    pub points: Vec<LineScanPoint>,
}

/// Scans `samples` equally spaced `t` with `|t| <= 0.25`, within the range
/// keeping the batch inside `[-1, 1]`. Lines on which some sample has a
/// degenerate posterior (a batch point almost on an observation, or two batch
/// points almost coinciding) are redrawn. Every MC estimate uses the same
/// random numbers, so the band is smooth in `t`.
pub fn line_scan(seed: u64, samples: usize, mc_samples: usize) -> Result<LineScan> {
    let model = demo_posterior(DEMO_OBSERVATIONS, derive_seed(seed, 0))?;
    let incumbent = model.incumbent()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let samples = samples.max(2);
    for redraws in 0..MAX_LINE_DRAWS {
        let x0: Vec<f64> = (0..LINESCAN_BATCH).map(|_| rng.random_range(-0.8..0.8)).collect();
        let raw: Vec<f64> = (0..LINESCAN_BATCH).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let (mut lo, mut hi) = (-MAX_T, MAX_T);
        for (x, v) in x0.iter().zip(&d) {
            let (a, b) = ((-1.0 - x) / v, (1.0 - x) / v);
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
        let ts: Vec<f64> = (0..samples).map(|j| lo + (hi - lo) * j as f64 / (samples - 1) as f64).collect();
        let batch = |t: f64| DMatrix::from_fn(LINESCAN_BATCH, 1, |a, _| (x0[a] + t * d[a]).clamp(-1.0, 1.0));
        let mut usable = true;
        for &t in &ts {
            if SdpProblem::new(&model.moment_matrix(&batch(t))?, incumbent).is_err() {
                usable = false;
                break;
            }
        }
        if !usable {
            continue;
        }

        let acq = OeiAcquisition::new(&model, 2.0);
        let mut solver = SdpSolver::new(SdpSettings::default());
        let mc_seed = derive_seed(seed, 2);
        let mut points = Vec::with_capacity(samples);
        for &t in &ts {
            let x = batch(t);
            let e = acq.evaluate(&x, &mut solver, true, false)?;
            let g = e.gradient.expect("gradient requested");
            let post = model.posterior(&x)?;
            let mc = mc_expected_improvement(&post.mean, &post.covariance, incumbent, mc_samples, mc_seed)?;
            points.push(LineScanPoint {
                t,
                oei: e.value,
                oei_slope: g.iter().zip(&d).map(|(a, b)| a * b).sum(),
                mc: mc.estimate,
                mc_stderr: mc.standard_error,
            });
        }
        return Ok(LineScan { batch: x0, direction: d, redraws, points });
    }
    Err(Error::InvalidArgument(format!("no nondegenerate line found in {MAX_LINE_DRAWS} draws")))
}

/// Indices `j` where `|f(t_{j+1}) - f(t_j)|` exceeds `JUMP_FACTOR dt` times the
/// larger endpoint slope, plus a rounding allowance.
pub fn jump_violations(points: &[LineScanPoint]) -> Vec<usize> {
    points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| {
            let dt = w[1].t - w[0].t;
            let slope = w[0].oei_slope.abs().max(w[1].oei_slope.abs());
            let allowance = 1e-9 * (1.0 + w[0].oei.abs());
            (w[1].oei - w[0].oei).abs() > JUMP_FACTOR * dt * slope + allowance
        })
        .map(|(j, _)| j)
        .collect()
}

/// Indices where OEI lies above the MC estimate plus three standard errors.
pub fn band_violations(points: &[LineScanPoint]) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.oei > p.mc + 3.0 * p.mc_stderr)
        .map(|(j, _)| j)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_jump() {
        let p = |t: f64, oei: f64| LineScanPoint { t, oei, oei_slope: 1.0, mc: 0.0, mc_stderr: 0.0 };
        let pts = vec![p(0.0, -1.0), p(0.01, -0.99), p(0.02, -0.5)];
        assert_eq!(jump_violations(&pts), vec![1]);
        assert_eq!(band_violations(&pts), Vec::<usize>::new());
    }
}

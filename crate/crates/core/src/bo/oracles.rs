//! Reference values for the acquisition: Monte-Carlo batch EI, closed-form
//! one-point EI, and the closed-form one-point OEI value.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::gp::GpModel;
use crate::linalg::cholesky_with_jitter;
use crate::{Error, Result};

pub const DEFAULT_MC_SAMPLES: usize = 200_000;
const MIN_MC_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
}

/// `E[min(y_1..y_k, y_min)] - y_min` under `N(mu, sigma)` from antithetic
/// pairs `mu +- L z`. The standard error comes from the spread of pair means.
pub fn mc_expected_improvement(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    incumbent: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let k = mu.len();
    if sigma.nrows() != k || sigma.ncols() != k {
        return Err(Error::DimensionMismatch { expected: k, found: sigma.nrows() });
    }
    if samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_MC_SAMPLES} samples, got {samples}")));
    }
    let scale = sigma.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let l = match sigma.clone().cholesky() {
        Some(ch) => ch.l(),
        None => cholesky_with_jitter(sigma, 1e-12 * scale, 1e-6 * scale)?.0.l(),
    };
    let pairs = samples.div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DVector::zeros(k);
    let improvement = |xi: &DVector<f64>| xi.iter().fold(incumbent, |a, &v| a.min(v)) - incumbent;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..pairs {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        let d = &l * &z;
        let g = 0.5 * (improvement(&(mu + &d)) + improvement(&(mu - &d)));
        sum += g;
        sum_sq += g * g;
    }
    let n = pairs as f64;
    let mean = sum / n;
    let var = if pairs > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(McEstimate { estimate: mean, standard_error: (var / n).sqrt() })
}

/// Closed-form one-point EI in the same sign convention as the acquisition:
/// `-[(y_min - mu) Phi(z) + sigma phi(z)]`, `z = (y_min - mu) / sigma`.
/// A non-positive variance gives the deterministic limit `min(mu - y_min, 0)`.
pub fn one_point_ei(mu: f64, var: f64, incumbent: f64) -> f64 {
    if !(var > 0.0) {
        return (mu - incumbent).min(0.0);
    }
    let sd = var.sqrt();
    let z = (incumbent - mu) / sd;
    let n = Normal::standard();
    (-((incumbent - mu) * n.cdf(z) + sd * n.pdf(z))).min(0.0)
}

/// Derivatives of [`one_point_ei`] in `mu` and `var`.
pub(crate) fn one_point_ei_partials(mu: f64, var: f64, incumbent: f64) -> (f64, f64) {
    if !(var > 0.0) {
        return (if mu < incumbent { 1.0 } else { 0.0 }, 0.0);
    }
    let sd = var.sqrt();
    let z = (incumbent - mu) / sd;
    let n = Normal::standard();
    (n.cdf(z), -n.pdf(z) / (2.0 * sd))
}

/// Worst case of `E[min(xi, y_min)] - y_min` over all distributions with mean
/// `mu` and variance `var`.
pub fn oei_k1_closed_form(mu: f64, var: f64, incumbent: f64) -> f64 {
    let d = mu - incumbent;
    0.5 * (d - d.hypot(var.max(0.0).sqrt()))
}

/// Scores each batch by Monte-Carlo EI under the posterior of `model`. All
/// batches share the same random numbers, so identical batches score
/// identically.
pub fn score_batches(model: &GpModel, batches: &[DMatrix<f64>], samples: usize, seed: u64) -> Result<Vec<McEstimate>> {
    let incumbent = model.incumbent()?;
    batches
        .iter()
        .map(|x| {
            let post = model.posterior(x)?;
            mc_expected_improvement(&post.mean, &post.covariance, incumbent, samples, seed)
        })
        .collect()
}

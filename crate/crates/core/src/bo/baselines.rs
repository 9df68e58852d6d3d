//! Sequential batch baselines: constant liar EI and batch LCB. Both pick one
//! point at a time by multistart minimization over the box, then condition the
//! model on the pick before choosing the next.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracles::{one_point_ei, one_point_ei_partials};
use crate::gp::{Dataset, GpModel};
use crate::optimize::{self, BoxDomain, Evaluation, MultistartConfig};
use crate::Result;

/// Value assigned to pending points by the constant liar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Lie {
    /// Mean of the observed values.
    #[default]
    Mix,
}

impl Lie {
    fn value(self, values: &[f64]) -> f64 {
        match self {
            Lie::Mix => values.iter().sum::<f64>() / values.len().max(1) as f64,
        }
    }
}

/// `k` points, each minimizing one-point EI under a model that treats the
/// earlier picks as observed at the lie value.
pub fn constant_liar_batch(
    model: &GpModel,
    domain: &BoxDomain,
    k: usize,
    lie: Lie,
    config: &MultistartConfig,
) -> Result<DMatrix<f64>> {
    let lie_value = lie.value(model.dataset().values());
    let incumbent = model.incumbent()?;
    let mut current = model.clone();
    let mut picks: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let m = &current;
        let objective = |_| {
            move |x: &[f64], _h: bool| -> std::result::Result<Evaluation, String> {
                let p = m.predict_point(x).map_err(|e| e.to_string())?;
                let (dm, dv) = one_point_ei_partials(p.mean, p.variance, incumbent);
                Ok(Evaluation {
                    value: one_point_ei(p.mean, p.variance, incumbent),
                    gradient: p.mean_gradient.iter().zip(&p.variance_gradient).map(|(a, b)| dm * a + dv * b).collect(),
                    hessian: None,
                })
            }
        };
        let cfg = MultistartConfig { seed: config.seed.wrapping_add(j as u64), ..config.clone() };
        let best = optimize::minimize(objective, domain, &cfg)?;
        picks.push(best.x.clone());
        if j + 1 < k {
            current = augmented(model, &picks, lie_value)?;
        }
    }
    Ok(batch_matrix(&picks))
}

/// Confidence parameter after `t` BO iterations in dimension `d`:
/// `2 log(d t^2 pi^2 / (6 delta))`.
pub fn lcb_beta(t: usize, d: usize, delta: f64) -> f64 {
    let t = t.max(1) as f64;
    2.0 * (d as f64 * t * t * std::f64::consts::PI.powi(2) / (6.0 * delta)).ln()
}

/// `k` points, each minimizing `mu(x) - sqrt(beta) sigma(x)`. The mean stays
/// that of `model`; only the variance is conditioned on the earlier picks.
pub fn batch_lcb(
    model: &GpModel,
    domain: &BoxDomain,
    k: usize,
    beta: f64,
    config: &MultistartConfig,
) -> Result<DMatrix<f64>> {
    let root_beta = beta.max(0.0).sqrt();
    let mut var_model = model.clone();
    let mut picks: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let vm = &var_model;
        let objective = |_| {
            move |x: &[f64], _h: bool| -> std::result::Result<Evaluation, String> {
                let p = model.predict_point(x).map_err(|e| e.to_string())?;
                let q = vm.predict_point(x).map_err(|e| e.to_string())?;
                let sd = q.variance.sqrt();
                Ok(Evaluation {
                    value: p.mean - root_beta * sd,
                    gradient: p
                        .mean_gradient
                        .iter()
                        .zip(&q.variance_gradient)
                        .map(|(a, b)| a - root_beta * b / (2.0 * sd))
                        .collect(),
                    hessian: None,
                })
            }
        };
        let cfg = MultistartConfig { seed: config.seed.wrapping_add(j as u64), ..config.clone() };
        let best = optimize::minimize(objective, domain, &cfg)?;
        picks.push(best.x.clone());
        if j + 1 < k {
            // The observed value does not affect the posterior covariance.
            var_model = augmented(model, &picks, 0.0)?;
        }
    }
    Ok(batch_matrix(&picks))
}

/// `k` independent uniform points.
pub fn random_batch(domain: &BoxDomain, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<Vec<f64>> = (0..k).map(|_| domain.sample(&mut rng)).collect();
    batch_matrix(&picks)
}

fn augmented(model: &GpModel, picks: &[Vec<f64>], value: f64) -> Result<GpModel> {
    let mut data: Dataset = model.dataset().clone();
    for p in picks {
        data.push(p, value)?;
    }
    GpModel::new(data, *model.kernel(), model.mean_function().clone(), model.noise())
}

pub(crate) fn batch_matrix(picks: &[Vec<f64>]) -> DMatrix<f64> {
    let n = picks.first().map_or(0, Vec::len);
    DMatrix::from_fn(picks.len(), n, |a, d| picks[a][d])
}

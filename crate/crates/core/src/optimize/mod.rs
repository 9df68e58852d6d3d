//! Box-constrained local minimization with multistart.
//!
//! Two local methods share one projected line search:
//! * [`Mode::QuasiNewton`]: limited-memory BFGS on the free variables with
//!   gradient projection onto the box.
//! * [`Mode::NewtonWithHessian`]: projected Newton on the free variables with
//!   the Hessian shifted by a multiple of the identity until it factors.
//!
//! Restarts run on the rayon pool. Each restart owns its objective instance,
//! built by the caller's factory from the restart index, so results do not
//! depend on scheduling.

mod domain;
mod local;

pub use domain::{random_starts, BoxDomain};
pub use local::{minimize_local, Evaluation, LocalResult, Objective};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    QuasiNewton,
    NewtonWithHessian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultistartConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for MultistartConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            mode: Mode::QuasiNewton,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum RestartOutcome {
    Finished(LocalResult),
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartOutcome>,
}

impl MinimizeResult {
    pub fn best(&self) -> &LocalResult {
        match &self.restarts[self.best_restart] {
            RestartOutcome::Finished(r) => r,
            RestartOutcome::Failed(_) => unreachable!("best restart always finished"),
        }
    }
}

/// Multistart from `config.restarts` uniform random points.
pub fn minimize<F, O>(make_objective: F, domain: &BoxDomain, config: &MultistartConfig) -> Result<MinimizeResult>
where
    F: Fn(usize) -> O + Sync,
    O: Objective,
{
    if config.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be >= 1".into()));
    }
    let starts = random_starts(domain, config.restarts, config.seed);
    minimize_from(make_objective, starts, domain, config)
}

/// Multistart from caller-supplied starting points.
pub fn minimize_from<F, O>(
    make_objective: F,
    starts: Vec<Vec<f64>>,
    domain: &BoxDomain,
    config: &MultistartConfig,
) -> Result<MinimizeResult>
where
    F: Fn(usize) -> O + Sync,
    O: Objective,
{
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no starting points".into()));
    }
    let restarts: Vec<RestartOutcome> = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut obj = make_objective(i);
            match minimize_local(&mut obj, s, domain, config) {
                Ok(r) => RestartOutcome::Finished(r),
                Err(e) => {
                    log::debug!("restart {i} failed: {e}");
                    RestartOutcome::Failed(e)
                }
            }
        })
        .collect();
    // Lowest value wins; ties go to the lower restart index.
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in restarts.iter().enumerate() {
        if let RestartOutcome::Finished(r) = r {
            if best.is_none_or(|(_, v)| r.value < v) {
                best = Some((i, r.value));
            }
        }
    }
    match best {
        Some((i, value)) => {
            let x = match &restarts[i] {
                RestartOutcome::Finished(r) => r.x.clone(),
                RestartOutcome::Failed(_) => unreachable!(),
            };
            Ok(MinimizeResult { x, value, best_restart: i, restarts })
        }
        None => {
            let last = restarts
                .iter()
                .rev()
                .find_map(|r| match r {
                    RestartOutcome::Failed(e) => Some(e.clone()),
                    _ => None,
                })
                .unwrap_or_default();
            Err(Error::AllRestartsFailed { restarts: restarts.len(), last })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn bowl(x: &[f64], h: bool) -> std::result::Result<Evaluation, String> {
        Ok(Evaluation {
            value: x.iter().map(|v| v * v).sum(),
            gradient: x.iter().map(|v| 2.0 * v).collect(),
            hessian: h.then(|| DMatrix::identity(x.len(), x.len()) * 2.0),
        })
    }

    #[test]
    fn bowl_minimum_at_origin() {
        let dom = BoxDomain::new(vec![-1.0; 2], vec![1.0; 2]).unwrap();
        for mode in [Mode::QuasiNewton, Mode::NewtonWithHessian] {
            let cfg = MultistartConfig { restarts: 4, mode, ..Default::default() };
            let r = minimize(|_| bowl, &dom, &cfg).unwrap();
            assert!(r.x.iter().all(|v| v.abs() < 1e-6), "{mode:?} {:?}", r.x);
        }
    }

    #[test]
    fn linear_objective_hits_lower_bound() {
        let dom = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
        let f = |x: &[f64], _h: bool| -> std::result::Result<Evaluation, String> {
            Ok(Evaluation { value: x[0], gradient: vec![1.0], hessian: Some(DMatrix::zeros(1, 1)) })
        };
        for mode in [Mode::QuasiNewton, Mode::NewtonWithHessian] {
            let cfg = MultistartConfig { restarts: 3, mode, ..Default::default() };
            let r = minimize(|_| f, &dom, &cfg).unwrap();
            assert_eq!(r.x, vec![0.0]);
            assert_eq!(r.value, 0.0);
        }
    }

    #[test]
    fn all_failing_restarts_is_an_error() {
        let dom = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
        let f = |_: &[f64], _h: bool| -> std::result::Result<Evaluation, String> { Err("boom".into()) };
        let cfg = MultistartConfig { restarts: 3, ..Default::default() };
        assert!(matches!(minimize(|_| f, &dom, &cfg), Err(Error::AllRestartsFailed { .. })));
    }

    #[test]
    fn failed_restarts_are_skipped() {
        let dom = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
        let cfg = MultistartConfig { restarts: 4, ..Default::default() };
        let r = minimize(
            |i| {
                move |x: &[f64], h: bool| {
                    if i == 0 {
                        Err("bad start".to_string())
                    } else {
                        bowl(x, h)
                    }
                }
            },
            &dom,
            &cfg,
        )
        .unwrap();
        assert!(matches!(r.restarts[0], RestartOutcome::Failed(_)));
        assert!(r.value < 1e-12);
    }
}

use nalgebra::{DMatrix, DVector};

use super::{Dataset, Kernel, KernelFamily, MeanFunction, JITTER_MAX, JITTER_RELATIVE};
use crate::linalg::{cholesky_with_jitter, rows};
use crate::optimize::{self, BoxDomain, Evaluation, Mode, MultistartConfig};
use crate::{Error, Result};

/// Log marginal likelihood and its gradient with respect to
/// `(log lengthscale, log variance)`.
#[derive(Debug, Clone, Copy)]
pub struct LogLikelihood {
    pub value: f64,
    pub gradient: [f64; 2],
}

pub fn log_marginal_likelihood(
    dataset: &Dataset,
    kernel: &Kernel,
    mean: &MeanFunction,
    noise: f64,
) -> Result<LogLikelihood> {
    let l = dataset.len();
    if l == 0 {
        return Err(Error::InvalidArgument("marginal likelihood of an empty dataset".into()));
    }
    let x = rows(dataset.inputs());
    let mut r2 = DMatrix::zeros(l, l);
    for i in 0..l {
        for j in 0..i {
            let d: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            r2[(i, j)] = d;
            r2[(j, i)] = d;
        }
    }
    let gram = r2.map(|d| kernel.radial(d));
    let mut a = gram.clone();
    for i in 0..l {
        a[(i, i)] += noise;
    }
    let (chol, jitter) = cholesky_with_jitter(
        &a,
        JITTER_RELATIVE * kernel.variance,
        JITTER_MAX * kernel.variance,
    )?;
    let resid = DVector::from_iterator(l, dataset.values().iter().zip(&x).map(|(y, p)| y - mean.value(p)));
    let alpha = chol.solve(&resid);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let value = -0.5 * resid.dot(&alpha) - 0.5 * log_det - 0.5 * l as f64 * (2.0 * std::f64::consts::PI).ln();

    let inv = chol.inverse();
    // Jitter scales with the variance, so d K / d log v = gram + jitter I.
    let mut dk_var = gram;
    for i in 0..l {
        dk_var[(i, i)] += jitter;
    }
    let dk_len = r2.map(|d| kernel.dlog_lengthscale(d));
    let grad = |dk: &DMatrix<f64>| -> f64 {
        let quad = alpha.dot(&(dk * &alpha));
        let trace: f64 = inv.iter().zip(dk.iter()).map(|(a, b)| a * b).sum();
        0.5 * (quad - trace)
    };
    Ok(LogLikelihood { value, gradient: [grad(&dk_len), grad(&dk_var)] })
}

/// Search box for hyperparameter fitting, in log space.
#[derive(Debug, Clone, Copy)]
pub struct HyperBounds {
    pub log_lengthscale: (f64, f64),
    pub log_variance: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            log_lengthscale: (1e-3f64.ln(), 1e3f64.ln()),
            log_variance: (1e-4f64.ln(), 1e4f64.ln()),
        }
    }
}

/// Maximum marginal-likelihood point estimate of the kernel hyperparameters.
pub fn fit_hyperparameters(
    dataset: &Dataset,
    family: KernelFamily,
    mean: &MeanFunction,
    noise: f64,
    bounds: &HyperBounds,
    restarts: usize,
    seed: u64,
) -> Result<Kernel> {
    let domain = BoxDomain::new(
        vec![bounds.log_lengthscale.0, bounds.log_variance.0],
        vec![bounds.log_lengthscale.1, bounds.log_variance.1],
    )?;
    let config = MultistartConfig {
        restarts,
        max_iterations: 200,
        gradient_tolerance: 1e-5,
        mode: Mode::QuasiNewton,
        seed,
    };
    let objective = |_| {
        move |theta: &[f64], _h: bool| -> std::result::Result<Evaluation, String> {
            let kernel = Kernel::new(family, theta[1].exp(), theta[0].exp()).map_err(|e| e.to_string())?;
            let ll = log_marginal_likelihood(dataset, &kernel, mean, noise).map_err(|e| e.to_string())?;
            Ok(Evaluation {
                value: -ll.value,
                gradient: vec![-ll.gradient[0], -ll.gradient[1]],
                hessian: None,
            })
        }
    };
    let best = optimize::minimize(objective, &domain, &config)?;
    Kernel::new(family, best.x[1].exp(), best.x[0].exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(seed: u64, l: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..2 * l).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..l).map(|i| (3.0 * xs[i]).sin() + xs[l + i]).collect();
        Dataset::new(DMatrix::from_column_slice(l, 2, &xs), ys).unwrap()
    }

    #[test]
    fn single_standard_normal_point() {
        let d = Dataset::new(DMatrix::zeros(1, 1), vec![0.0]).unwrap();
        // K = v (1 + 1e-6) with v = 1/(1 + 1e-6) gives total variance 1.
        let k = Kernel::squared_exponential(1.0 / (1.0 + 1e-6), 1.0).unwrap();
        let ll = log_marginal_likelihood(&d, &k, &MeanFunction::Zero, 0.0).unwrap();
        assert!((ll.value + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = random_dataset(3, 5);
        for family in [KernelFamily::SquaredExponential, KernelFamily::Matern32] {
            let (ll0, lv0) = (0.4f64.ln(), 1.3f64.ln());
            let f = |a: f64, b: f64| {
                let k = Kernel::new(family, b.exp(), a.exp()).unwrap();
                log_marginal_likelihood(&d, &k, &MeanFunction::Zero, 1e-6).unwrap().value
            };
            let k = Kernel::new(family, lv0.exp(), ll0.exp()).unwrap();
            let g = log_marginal_likelihood(&d, &k, &MeanFunction::Zero, 1e-6).unwrap().gradient;
            let h = 1e-5;
            let fd = [(f(ll0 + h, lv0) - f(ll0 - h, lv0)) / (2.0 * h), (f(ll0, lv0 + h) - f(ll0, lv0 - h)) / (2.0 * h)];
            for i in 0..2 {
                assert!((g[i] - fd[i]).abs() <= 1e-5 * (1.0 + fd[i].abs()), "{family:?} {g:?} {fd:?}");
            }
        }
    }

    #[test]
    fn variance_refit_scales_with_data() {
        let d = random_dataset(9, 12);
        let c = 3.0;
        let scaled = Dataset::new(d.inputs().clone(), d.values().iter().map(|y| c * y).collect()).unwrap();
        let fit = |ds: &Dataset| {
            fit_hyperparameters(ds, KernelFamily::SquaredExponential, &MeanFunction::Zero, 0.0, &HyperBounds::default(), 8, 1)
                .unwrap()
        };
        let (k1, k2) = (fit(&d), fit(&scaled));
        assert!((k2.variance / k1.variance - c * c).abs() < 1e-2 * c * c, "{k1:?} {k2:?}");
        assert!((k2.lengthscale / k1.lengthscale - 1.0).abs() < 1e-2);
    }
}

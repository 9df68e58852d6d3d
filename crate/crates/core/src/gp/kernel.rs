use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    SquaredExponential,
    Matern32,
}

/// Isotropic stationary covariance function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    pub variance: f64,
    pub lengthscale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    Value,
    Gradient,
    Hessian,
}

/// Kernel value plus derivatives with respect to the first argument.
#[derive(Debug, Clone)]
pub struct KernelEval {
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
}

impl Kernel {
    pub fn new(family: KernelFamily, variance: f64, lengthscale: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("kernel variance {variance} must be > 0")));
        }
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel lengthscale {lengthscale} must be > 0"
            )));
        }
        Ok(Self { family, variance, lengthscale })
    }

    pub fn squared_exponential(variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, variance, lengthscale)
    }

    pub fn matern32(variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern32, variance, lengthscale)
    }

    fn sq_dist(x: &[f64], x2: &[f64]) -> f64 {
        x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Kernel as a function of the squared distance.
    pub(crate) fn radial(&self, r2: f64) -> f64 {
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => self.variance * (-0.5 * r2 / (l * l)).exp(),
            KernelFamily::Matern32 => {
                let s = SQRT3 * r2.sqrt() / l;
                self.variance * (1.0 + s) * (-s).exp()
            }
        }
    }

    /// `d kappa / d x = factor(r2) * (x - x2)`; well defined at `r2 = 0` for
    /// both families.
    pub(crate) fn gradient_factor(&self, r2: f64) -> f64 {
        let l2 = self.lengthscale * self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => -self.radial(r2) / l2,
            KernelFamily::Matern32 => {
                let s = SQRT3 * r2.sqrt() / self.lengthscale;
                -3.0 * self.variance / l2 * (-s).exp()
            }
        }
    }

    /// Derivative of the kernel with respect to `log(lengthscale)`.
    pub(crate) fn dlog_lengthscale(&self, r2: f64) -> f64 {
        let l2 = self.lengthscale * self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => self.radial(r2) * r2 / l2,
            KernelFamily::Matern32 => {
                let s = SQRT3 * r2.sqrt() / self.lengthscale;
                self.variance * s * s * (-s).exp()
            }
        }
    }

    pub fn value(&self, x: &[f64], x2: &[f64]) -> f64 {
        self.radial(Self::sq_dist(x, x2))
    }

    /// Gradient with respect to `x`, accumulated into `out` scaled by `weight`.
    pub(crate) fn add_gradient(&self, x: &[f64], x2: &[f64], weight: f64, out: &mut [f64]) {
        let f = weight * self.gradient_factor(Self::sq_dist(x, x2));
        for ((o, a), b) in out.iter_mut().zip(x).zip(x2) {
            *o += f * (a - b);
        }
    }

    pub fn gradient(&self, x: &[f64], x2: &[f64]) -> DVector<f64> {
        let mut g = vec![0.0; x.len()];
        self.add_gradient(x, x2, 1.0, &mut g);
        DVector::from_vec(g)
    }

    /// Hessian with respect to `x`. Matern 3/2 is only once differentiable at
    /// zero distance.
    pub fn hessian(&self, x: &[f64], x2: &[f64]) -> Result<DMatrix<f64>> {
        let n = x.len();
        let d = DVector::from_iterator(n, x.iter().zip(x2).map(|(a, b)| a - b));
        let r2 = d.norm_squared();
        let l2 = self.lengthscale * self.lengthscale;
        let mut h = DMatrix::zeros(n, n);
        match self.family {
            KernelFamily::SquaredExponential => {
                let k = self.radial(r2);
                h.ger(k / (l2 * l2), &d, &d, 0.0);
                for i in 0..n {
                    h[(i, i)] -= k / l2;
                }
            }
            KernelFamily::Matern32 => {
                if r2 == 0.0 {
                    return Err(Error::KernelNotTwiceDifferentiable);
                }
                let r = r2.sqrt();
                let e = (-SQRT3 * r / self.lengthscale).exp();
                let c = -3.0 * self.variance / l2 * e;
                h.ger(-c * SQRT3 / (self.lengthscale * r), &d, &d, 0.0);
                for i in 0..n {
                    h[(i, i)] += c;
                }
            }
        }
        Ok(h)
    }

    pub fn eval(&self, x: &[f64], x2: &[f64], order: DerivativeOrder) -> Result<KernelEval> {
        if x.len() != x2.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: x2.len() });
        }
        let gradient = (order != DerivativeOrder::Value).then(|| self.gradient(x, x2));
        let hessian = match order {
            DerivativeOrder::Hessian => Some(self.hessian(x, x2)?),
            _ => None,
        };
        Ok(KernelEval { value: self.value(x, x2), gradient, hessian })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let h = 1e-6 * (1.0 + x[i].abs());
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn se_peak_value_matches_variance() {
        let k = Kernel::squared_exponential(10.0, 0.1).unwrap();
        let e = k.eval(&[0.3], &[0.3], DerivativeOrder::Gradient).unwrap();
        assert_eq!(e.value, 10.0);
        assert_eq!(e.gradient.unwrap()[0], 0.0);
    }

    #[test]
    fn se_unit_distance() {
        let k = Kernel::squared_exponential(1.0, 1.0).unwrap();
        assert!((k.value(&[0.0, 0.0], &[0.6, 0.8]) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k.value(&[1.0], &[0.0]) - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn matern_peak_gradient_is_zero_and_hessian_errors() {
        let k = Kernel::matern32(2.0, 0.5).unwrap();
        let e = k.eval(&[0.1, 0.2], &[0.1, 0.2], DerivativeOrder::Gradient).unwrap();
        assert_eq!(e.value, 2.0);
        assert!(e.gradient.unwrap().iter().all(|g| *g == 0.0));
        assert!(matches!(
            k.eval(&[0.1, 0.2], &[0.1, 0.2], DerivativeOrder::Hessian),
            Err(Error::KernelNotTwiceDifferentiable)
        ));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let x = [0.13, -0.42];
        let x2 = [-0.2, 0.31];
        for k in [Kernel::squared_exponential(1.7, 0.6).unwrap(), Kernel::matern32(0.8, 0.9).unwrap()] {
            let g = k.gradient(&x, &x2);
            let fd = central_gradient(|p| k.value(p, &x2), &x);
            for i in 0..2 {
                assert!((g[i] - fd[i]).abs() <= 1e-6 * (1.0 + fd[i].abs()), "{k:?}");
            }
            let h = k.hessian(&x, &x2).unwrap();
            for i in 0..2 {
                let fd = central_gradient(|p| k.gradient(p, &x2)[i], &x);
                for j in 0..2 {
                    assert!((h[(i, j)] - fd[j]).abs() <= 1e-6 * (1.0 + fd[j].abs()));
                }
            }
        }
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(Kernel::squared_exponential(0.0, 1.0).is_err());
        assert!(Kernel::matern32(1.0, -1.0).is_err());
    }
}

use serde::{Deserialize, Serialize};

/// Prior mean function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum MeanFunction {
    #[default]
    Zero,
    /// `m(x) = sum_d (c_d x_d)^2`. A single coefficient is broadcast over all
    /// input dimensions, so in 1-d this is `(c x)^2`.
    Quadratic { coefficients: Vec<f64> },
}

impl MeanFunction {
    pub fn quadratic(c: f64) -> Self {
        Self::Quadratic { coefficients: vec![c] }
    }

    fn coefficient(coefficients: &[f64], d: usize) -> f64 {
        if coefficients.len() == 1 {
            coefficients[0]
        } else {
            coefficients[d]
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic { coefficients } => x
                .iter()
                .enumerate()
                .map(|(d, xd)| {
                    let cx = Self::coefficient(coefficients, d) * xd;
                    cx * cx
                })
                .sum(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Zero => vec![0.0; x.len()],
            Self::Quadratic { coefficients } => x
                .iter()
                .enumerate()
                .map(|(d, xd)| {
                    let c = Self::coefficient(coefficients, d);
                    2.0 * c * c * xd
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_is_zero() {
        assert_eq!(MeanFunction::Zero.value(&[3.0, -1.0]), 0.0);
        assert_eq!(MeanFunction::Zero.gradient(&[3.0]), vec![0.0]);
    }

    #[test]
    fn quadratic_mean() {
        let m = MeanFunction::quadratic(5.0);
        assert!((m.value(&[0.2]) - 1.0).abs() < 1e-14);
        assert!((m.gradient(&[0.2])[0] - 10.0).abs() < 1e-13);
    }
}

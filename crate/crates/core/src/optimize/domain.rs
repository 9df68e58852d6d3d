use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::InvalidArgument("box domain must have dimension >= 1".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidArgument("box bounds must satisfy lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `[-0.5, 0.5]^n`.
    pub fn centered_unit(n: usize) -> Self {
        Self { lower: vec![-0.5; n], upper: vec![0.5; n] }
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dimension()).map(|i| self.width(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| l <= v && v <= u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Domain of `vec(X)` for a `k x n` batch, column-major: entry `(a, d)` at
    /// index `d * k + a` takes the bounds of dimension `d`.
    pub fn batch(&self, k: usize) -> Self {
        let expand = |v: &[f64]| v.iter().flat_map(|b| std::iter::repeat_n(*b, k)).collect();
        Self { lower: expand(&self.lower), upper: expand(&self.upper) }
    }

    /// Map from this box onto `[-0.5, 0.5]^n`.
    pub fn to_centered_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / self.width(i) - 0.5)
            .collect()
    }

    pub fn from_centered_unit(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| (self.lower[i] + (v + 0.5) * self.width(i)).clamp(self.lower[i], self.upper[i]))
            .collect()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| rng.random_range(*l..*u)).collect()
    }
}

/// Uniform points in the box, deterministic in `seed`.
pub fn random_starts(domain: &BoxDomain, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| domain.sample(&mut rng)).collect()
}

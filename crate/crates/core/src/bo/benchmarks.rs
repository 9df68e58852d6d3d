//! Standard test objectives on their usual domains.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::gp::{Dataset, GpModel, Kernel, MeanFunction};
use crate::linalg::cholesky_with_jitter;
use crate::optimize::BoxDomain;
use crate::{Error, Result};

type Evaluator = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct BenchmarkFunction {
    pub name: String,
    pub domain: BoxDomain,
    pub known_minimum: Option<f64>,
    evaluator: Arc<Evaluator>,
}

impl std::fmt::Debug for BenchmarkFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkFunction")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("known_minimum", &self.known_minimum)
            .finish()
    }
}

impl BenchmarkFunction {
    /// Wraps a user objective.
    pub fn new(
        name: impl Into<String>,
        domain: BoxDomain,
        known_minimum: Option<f64>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), domain, known_minimum, evaluator: Arc::new(f) }
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.evaluator)(x)
    }
}

pub const BENCHMARK_NAMES: [&str; 5] = ["cosine-mixture", "six-hump-camel", "hartmann6", "eggholder", "gp-draw"];

/// Looks up a benchmark by name. `seed` only matters for `gp-draw`.
pub fn benchmark(name: &str, seed: u64) -> Result<BenchmarkFunction> {
    match name {
        "cosine-mixture" => Ok(cosine_mixture()),
        "six-hump-camel" => Ok(six_hump_camel()),
        "hartmann6" => Ok(hartmann6()),
        "eggholder" => Ok(eggholder()),
        "gp-draw" => gp_draw(seed),
        other => Err(Error::UnknownBenchmark(other.to_string())),
    }
}

/// `-0.1 sum cos(5 pi x_i) + sum x_i^2` on `[-1, 1]^2`, minimum `-0.2` at the
/// origin.
pub fn cosine_mixture() -> BenchmarkFunction {
    let domain = BoxDomain::new(vec![-1.0; 2], vec![1.0; 2]).unwrap();
    BenchmarkFunction::new("cosine-mixture", domain, Some(-0.2), |x| {
        x.iter().map(|v| -0.1 * (5.0 * PI * v).cos() + v * v).sum()
    })
}

pub fn six_hump_camel() -> BenchmarkFunction {
    let domain = BoxDomain::new(vec![-2.0, -1.0], vec![2.0, 1.0]).unwrap();
    BenchmarkFunction::new("six-hump-camel", domain, Some(-1.031_628_453_489_877), |x| {
        let (a, b) = (x[0], x[1]);
        (4.0 - 2.1 * a * a + a.powi(4) / 3.0) * a * a + a * b + (-4.0 + 4.0 * b * b) * b * b
    })
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

pub fn hartmann6() -> BenchmarkFunction {
    let domain = BoxDomain::new(vec![0.0; 6], vec![1.0; 6]).unwrap();
    BenchmarkFunction::new("hartmann6", domain, Some(-3.322_368_011_415_51), |x| {
        -(0..4)
            .map(|i| {
                let inner: f64 = (0..6).map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2)).sum();
                HARTMANN_ALPHA[i] * (-inner).exp()
            })
            .sum::<f64>()
    })
}

pub fn eggholder() -> BenchmarkFunction {
    let domain = BoxDomain::new(vec![-512.0; 2], vec![512.0; 2]).unwrap();
    BenchmarkFunction::new("eggholder", domain, Some(-959.640_662_720_850_7), |x| {
        let (a, b) = (x[0], x[1] + 47.0);
        -b * (a / 2.0 + b).abs().sqrt().sin() - a * (a - b).abs().sqrt().sin()
    })
}

/// Parameters of the one-dimensional demo process: SE kernel with lengthscale
/// 0.1 and variance 10, mean `(5x)^2`, noise 1e-6, on `[-1, 1]`.
pub fn demo_kernel() -> Kernel {
    Kernel::squared_exponential(10.0, 0.1).unwrap()
}

pub fn demo_mean() -> MeanFunction {
    MeanFunction::quadratic(25.0)
}

pub const DEMO_NOISE: f64 = 1e-6;
const GP_DRAW_GRID: usize = 401;

/// Joint draw of `f(x) + noise` from the demo process at the given inputs.
fn draw_demo_values(xs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let kernel = demo_kernel();
    let mean = demo_mean();
    let n = xs.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| kernel.value(&[xs[i]], &[xs[j]]));
    for i in 0..n {
        k[(i, i)] += DEMO_NOISE;
    }
    let (chol, _) = cholesky_with_jitter(&k, 1e-8 * kernel.variance, 1e-2 * kernel.variance)?;
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let f = chol.l() * z;
    Ok(xs.iter().zip(f.iter()).map(|(x, v)| mean.value(&[*x]) + v).collect())
}

/// A sample path of the demo process on a 401-point grid, linearly
/// interpolated; the known minimum is the grid minimum.
pub fn gp_draw(seed: u64) -> Result<BenchmarkFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<f64> = (0..GP_DRAW_GRID).map(|i| -1.0 + 2.0 * i as f64 / (GP_DRAW_GRID - 1) as f64).collect();
    let values = draw_demo_values(&grid, &mut rng)?;
    let minimum = values.iter().copied().fold(f64::INFINITY, f64::min);
    let domain = BoxDomain::new(vec![-1.0], vec![1.0])?;
    Ok(BenchmarkFunction::new("gp-draw", domain, Some(minimum), move |x| {
        let t = ((x[0] + 1.0) / 2.0 * (GP_DRAW_GRID - 1) as f64).clamp(0.0, (GP_DRAW_GRID - 1) as f64);
        let i = (t.floor() as usize).min(GP_DRAW_GRID - 2);
        let w = t - i as f64;
        values[i] * (1.0 - w) + values[i + 1] * w
    }))
}

/// The demo posterior: `observations` uniform inputs on `[-1, 1]` with values
/// drawn jointly from the demo process, conditioned with the true kernel.
pub fn demo_posterior(observations: usize, seed: u64) -> Result<GpModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..observations).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let ys = draw_demo_values(&xs, &mut rng)?;
    let dataset = Dataset::new(DMatrix::from_column_slice(observations, 1, &xs), ys)?;
    GpModel::new(dataset, demo_kernel(), demo_mean(), DEMO_NOISE)
}

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{Kernel, MeanFunction};
use crate::linalg::{cholesky_with_jitter, rows, solve_lower, symmetrize};
use crate::{Error, Result};

/// Diagonal jitter added to every prior covariance, relative to the kernel
/// variance.
pub const JITTER_RELATIVE: f64 = 1e-6;
/// Largest relative jitter tried before giving up on a factorization.
pub const JITTER_MAX: f64 = 1e-2;

/// Observed inputs (one row per point) and values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    values: Vec<f64>,
    incumbent: f64,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, values: Vec<f64>) -> Result<Self> {
        if inputs.nrows() != values.len() {
            return Err(Error::DimensionMismatch { expected: inputs.nrows(), found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset values must be finite".into()));
        }
        let incumbent = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { inputs, values, incumbent })
    }

    pub fn empty(dimension: usize) -> Self {
        Self { inputs: DMatrix::zeros(0, dimension), values: Vec::new(), incumbent: f64::INFINITY }
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch { expected: self.dimension(), found: x.len() });
        }
        let l = self.len();
        let inputs = std::mem::replace(&mut self.inputs, DMatrix::zeros(0, 0));
        self.inputs = inputs.insert_row(l, 0.0);
        for (d, xd) in x.iter().enumerate() {
            self.inputs[(l, d)] = *xd;
        }
        self.values.push(y);
        self.incumbent = self.incumbent.min(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Best (smallest) observed value.
    pub fn incumbent(&self) -> Result<f64> {
        if self.is_empty() {
            Err(Error::InvalidArgument("incumbent of an empty dataset".into()))
        } else {
            Ok(self.incumbent)
        }
    }
}

/// Posterior mean and covariance on a batch. `covariance` already includes
/// `jitter` on its diagonal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub jitter: f64,
}

/// Bordered second-moment matrix `[Sigma + mu mu^T, mu; mu^T, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentMatrix {
    omega: DMatrix<f64>,
}

impl MomentMatrix {
    pub fn from_moments(mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if covariance.nrows() != k || covariance.ncols() != k {
            return Err(Error::DimensionMismatch { expected: k, found: covariance.nrows() });
        }
        let mut omega = DMatrix::zeros(k + 1, k + 1);
        for j in 0..k {
            for i in 0..k {
                omega[(i, j)] = covariance[(i, j)] + mean[i] * mean[j];
            }
            omega[(j, k)] = mean[j];
            omega[(k, j)] = mean[j];
        }
        omega[(k, k)] = 1.0;
        symmetrize(&mut omega);
        Ok(Self { omega })
    }

    /// Wrap a raw matrix; the corner must be exactly one.
    pub fn from_matrix(omega: DMatrix<f64>) -> Result<Self> {
        let n = omega.nrows();
        if n < 2 || omega.ncols() != n {
            return Err(Error::InvalidArgument("moment matrix must be square, size >= 2".into()));
        }
        if omega[(n - 1, n - 1)] != 1.0 {
            return Err(Error::InvalidArgument("moment matrix corner entry must be 1".into()));
        }
        Ok(Self { omega })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.omega
    }

    /// Batch size `k`; the matrix is `(k+1) x (k+1)`.
    pub fn k(&self) -> usize {
        self.omega.nrows() - 1
    }

    pub fn mean(&self) -> DVector<f64> {
        let k = self.k();
        self.omega.view((0, k), (k, 1)).column(0).into_owned()
    }

    /// Schur complement with respect to the corner entry.
    pub fn covariance(&self) -> DMatrix<f64> {
        let k = self.k();
        let mu = self.mean();
        self.omega.view((0, 0), (k, k)) - &mu * mu.transpose()
    }
}

pub fn moment_matrix(post: &PosteriorMoments) -> Result<MomentMatrix> {
    MomentMatrix::from_moments(&post.mean, &post.covariance)
}

/// Entrywise mean of moment matrices from several hyperparameter samples.
pub fn marginalized_moment_matrix(omegas: &[MomentMatrix]) -> Result<MomentMatrix> {
    let first = omegas
        .first()
        .ok_or_else(|| Error::InvalidArgument("no moment matrices to average".into()))?;
    let n = first.omega.nrows();
    let mut sum = DMatrix::zeros(n, n);
    for o in omegas {
        if o.omega.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: o.omega.nrows() });
        }
        sum += &o.omega;
    }
    sum /= omegas.len() as f64;
    sum[(n - 1, n - 1)] = 1.0;
    Ok(MomentMatrix { omega: sum })
}

/// One-point posterior with gradients in the input.
#[derive(Debug, Clone)]
pub struct PointPrediction {
    pub mean: f64,
    pub variance: f64,
    pub mean_gradient: Vec<f64>,
    pub variance_gradient: Vec<f64>,
}

/// A conditioned GP: the training Gram matrix is factored once and reused for
/// every batch query.
#[derive(Debug, Clone)]
pub struct GpModel {
    dataset: Dataset,
    kernel: Kernel,
    mean: MeanFunction,
    noise: f64,
    train: Vec<Vec<f64>>,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    pub fn new(dataset: Dataset, kernel: Kernel, mean: MeanFunction, noise: f64) -> Result<Self> {
        if !(noise >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise {noise} must be >= 0")));
        }
        let train = rows(dataset.inputs());
        let l = train.len();
        let base_jitter = JITTER_RELATIVE * kernel.variance;
        let (chol, alpha, jitter) = if l == 0 {
            (None, DVector::zeros(0), base_jitter)
        } else {
            let mut gram = DMatrix::from_fn(l, l, |i, j| kernel.value(&train[i], &train[j]));
            for i in 0..l {
                gram[(i, i)] += noise;
            }
            let (chol, jitter) =
                cholesky_with_jitter(&gram, base_jitter, JITTER_MAX * kernel.variance)?;
            let resid = DVector::from_iterator(
                l,
                dataset.values().iter().zip(&train).map(|(y, x)| y - mean.value(x)),
            );
            let alpha = chol.solve(&resid);
            (Some(chol), alpha, jitter)
        };
        Ok(Self { dataset, kernel, mean, noise, train, chol, alpha, jitter })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mean_function(&self) -> &MeanFunction {
        &self.mean
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn incumbent(&self) -> Result<f64> {
        self.dataset.incumbent()
    }

    fn check_batch(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if x.ncols() != self.dataset.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dataset.dimension(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// `K(X^d, X)` as an `l x k` matrix.
    fn cross(&self, batch: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(self.train.len(), batch.len(), |j, a| {
            self.kernel.value(&self.train[j], &batch[a])
        })
    }

    pub fn posterior(&self, x: &DMatrix<f64>) -> Result<PosteriorMoments> {
        self.check_batch(x)?;
        let batch = rows(x);
        let k = batch.len();
        let mut cov = DMatrix::from_fn(k, k, |a, b| self.kernel.value(&batch[a], &batch[b]));
        let mut mean = DVector::from_iterator(k, batch.iter().map(|p| self.mean.value(p)));
        if let Some(chol) = &self.chol {
            let cross = self.cross(&batch);
            mean += cross.transpose() * &self.alpha;
            let v = solve_lower(&chol.l(), &cross);
            cov -= v.transpose() * v;
        }
        for a in 0..k {
            cov[(a, a)] += self.jitter;
        }
        symmetrize(&mut cov);
        Ok(PosteriorMoments { mean, covariance: cov, jitter: self.jitter })
    }

    pub fn moment_matrix(&self, x: &DMatrix<f64>) -> Result<MomentMatrix> {
        moment_matrix(&self.posterior(x)?)
    }

    /// Gradients of `kappa(x_a, x^d_j)` with respect to `x_a`, one row per
    /// training point.
    fn train_gradients(&self, xa: &[f64]) -> DMatrix<f64> {
        let n = xa.len();
        let mut g = DMatrix::zeros(self.train.len(), n);
        let mut buf = vec![0.0; n];
        for (j, xj) in self.train.iter().enumerate() {
            buf.iter_mut().for_each(|b| *b = 0.0);
            self.kernel.add_gradient(xa, xj, 1.0, &mut buf);
            for d in 0..n {
                g[(j, d)] = buf[d];
            }
        }
        g
    }

    /// `d Omega / d vec(X)_(i)` for every scalar entry of the batch, ordered by
    /// column-major `vec(X)`: entry `(a, d)` of the `k x n` batch has index
    /// `d * k + a`.
    pub fn moment_matrix_jacobian(&self, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        self.check_batch(x)?;
        let post = self.posterior(x)?;
        let batch = rows(x);
        let (k, n) = (x.nrows(), x.ncols());
        let w = match &self.chol {
            Some(chol) => chol.solve(&self.cross(&batch)),
            None => DMatrix::zeros(0, k),
        };
        let mu = &post.mean;
        let mut out = vec![DMatrix::zeros(k + 1, k + 1); k * n];
        for c in 0..k {
            let gt = self.train_gradients(&batch[c]);
            let mean_grad = self.mean.gradient(&batch[c]);
            // Kernel gradients against the other batch points.
            let kb: Vec<DVector<f64>> = (0..k)
                .map(|b| {
                    if b == c {
                        DVector::zeros(n)
                    } else {
                        self.kernel.gradient(&batch[c], &batch[b])
                    }
                })
                .collect();
            for d in 0..n {
                let col = gt.column(d);
                let dmu = mean_grad[d] + col.dot(&self.alpha);
                let om = &mut out[d * k + c];
                for b in 0..k {
                    let ds = if b == c {
                        -2.0 * col.dot(&w.column(c))
                    } else {
                        kb[b][d] - col.dot(&w.column(b))
                    };
                    om[(c, b)] += ds;
                    if b != c {
                        om[(b, c)] += ds;
                    }
                }
                for b in 0..k {
                    om[(c, b)] += dmu * mu[b];
                    om[(b, c)] += dmu * mu[b];
                }
                om[(c, k)] = dmu;
                om[(k, c)] = dmu;
            }
        }
        Ok(out)
    }

    /// Posterior mean and variance at a single point with input gradients.
    pub fn predict_point(&self, x: &[f64]) -> Result<PointPrediction> {
        if x.len() != self.dataset.dimension() {
            return Err(Error::DimensionMismatch { expected: self.dataset.dimension(), found: x.len() });
        }
        let n = x.len();
        let mut mean = self.mean.value(x);
        let mut mean_gradient = self.mean.gradient(x);
        let mut variance = self.kernel.variance + self.jitter;
        let mut variance_gradient = vec![0.0; n];
        if let Some(chol) = &self.chol {
            let kx = DVector::from_iterator(
                self.train.len(),
                self.train.iter().map(|t| self.kernel.value(x, t)),
            );
            let w = chol.solve(&kx);
            mean += kx.dot(&self.alpha);
            variance -= kx.dot(&w);
            let gt = self.train_gradients(x);
            for d in 0..n {
                let col = gt.column(d);
                mean_gradient[d] += col.dot(&self.alpha);
                variance_gradient[d] = -2.0 * col.dot(&w);
            }
        }
        Ok(PointPrediction { mean, variance: variance.max(self.jitter), mean_gradient, variance_gradient })
    }
}

/// Batch posterior from scratch; see [`GpModel`] to reuse the factorization.
pub fn posterior(
    dataset: &Dataset,
    kernel: &Kernel,
    mean: &MeanFunction,
    x: &DMatrix<f64>,
    noise: f64,
) -> Result<PosteriorMoments> {
    GpModel::new(dataset.clone(), *kernel, mean.clone(), noise)?.posterior(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    fn toy_model() -> GpModel {
        let xs = DMatrix::from_column_slice(5, 1, &[-0.4, -0.1, 0.05, 0.3, 0.45]);
        let ys = vec![0.3, -0.2, 0.1, 0.8, -0.5];
        GpModel::new(
            Dataset::new(xs, ys).unwrap(),
            Kernel::squared_exponential(1.3, 0.25).unwrap(),
            MeanFunction::quadratic(1.5),
            1e-6,
        )
        .unwrap()
    }

    #[test]
    fn empty_dataset_is_prior() {
        let k = Kernel::squared_exponential(2.0, 0.5).unwrap();
        let m = MeanFunction::quadratic(5.0);
        let x = DMatrix::from_column_slice(2, 1, &[0.1, -0.3]);
        let post = posterior(&Dataset::empty(1), &k, &m, &x, 0.0).unwrap();
        assert!((post.mean[0] - 0.25).abs() < 1e-14);
        assert!((post.mean[1] - 2.25).abs() < 1e-14);
        assert!((post.covariance[(0, 1)] - k.value(&[0.1], &[-0.3])).abs() < 1e-14);
        assert!((post.covariance[(0, 0)] - 2.0 - post.jitter).abs() < 1e-14);
    }

    #[test]
    fn single_point_posterior_mean() {
        let data = Dataset::new(DMatrix::from_element(1, 1, 0.0), vec![1.0]).unwrap();
        let k = Kernel::squared_exponential(1.0, 1.0).unwrap();
        let post = posterior(&data, &k, &MeanFunction::Zero, &DMatrix::from_element(1, 1, 0.0), 1e-6)
            .unwrap();
        // 1 / (1 + noise + jitter), jitter = 1e-6 * variance.
        assert!((post.mean[0] - 1.0 / (1.0 + 1e-6)).abs() < 2e-6);
    }

    #[test]
    fn interpolates_training_points() {
        let model = toy_model();
        let x = DMatrix::from_column_slice(1, 1, &[0.3]);
        let post = model.posterior(&x).unwrap();
        assert!((post.mean[0] - 0.8).abs() < 1e-3);
        assert!(post.covariance[(0, 0)] < 1e-3 * 1.3);
    }

    #[test]
    fn moment_matrix_layout() {
        let mu = DVector::from_vec(vec![1.0, 2.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let om = MomentMatrix::from_moments(&mu, &sigma).unwrap();
        let expect =
            DMatrix::from_row_slice(3, 3, &[2.0, 2.5, 1.0, 2.5, 6.0, 2.0, 1.0, 2.0, 1.0]);
        assert_eq!(om.matrix(), &expect);
        assert_eq!(om.mean(), mu);
        assert!((om.covariance() - sigma).norm() < 1e-14);
        assert!(min_eigenvalue(om.matrix()) > 0.0);

        let id = MomentMatrix::from_moments(&DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(id.matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn marginalized_average() {
        let a = MomentMatrix::from_moments(&DVector::from_element(1, 0.0), &DMatrix::identity(1, 1))
            .unwrap();
        let b = MomentMatrix::from_moments(&DVector::from_element(1, 2.0), &DMatrix::identity(1, 1))
            .unwrap();
        let m = marginalized_moment_matrix(&[a.clone(), b]).unwrap();
        assert_eq!(m.matrix()[(0, 1)], 1.0);
        assert_eq!(m.matrix()[(0, 0)], 3.0);
        assert_eq!(m.matrix()[(1, 1)], 1.0);
        assert_eq!(marginalized_moment_matrix(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(marginalized_moment_matrix(&[a.clone(), a.clone()]).unwrap(), a);
        let big = MomentMatrix::from_moments(&DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
        assert!(marginalized_moment_matrix(&[a, big]).is_err());
        assert!(marginalized_moment_matrix(&[]).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = toy_model();
        let x = DMatrix::from_column_slice(2, 1, &[-0.25, 0.2]);
        let jac = model.moment_matrix_jacobian(&x).unwrap();
        for (i, ji) in jac.iter().enumerate() {
            assert_eq!(ji, &ji.transpose());
            let h = 1e-5;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (model.moment_matrix(&xp).unwrap().into_matrix()
                - model.moment_matrix(&xm).unwrap().into_matrix())
                / (2.0 * h);
            assert!((ji - &fd).norm() <= 1e-5 * (1.0 + fd.norm()), "coordinate {i}");
        }
    }

    #[test]
    fn jacobian_sparsity_far_from_data() {
        let model = toy_model();
        let x = DMatrix::from_column_slice(3, 1, &[5.0, 6.0, 7.5]);
        let jac = model.moment_matrix_jacobian(&x).unwrap();
        // Perturbing batch point 0 touches only row/column 0.
        let j0 = &jac[0];
        for a in 1..4 {
            for b in 1..4 {
                assert_eq!(j0[(a, b)], 0.0);
            }
        }
        assert!(j0[(0, 3)] != 0.0);
    }

    #[test]
    fn point_prediction_matches_batch() {
        let model = toy_model();
        let p = model.predict_point(&[0.12]).unwrap();
        let post = model.posterior(&DMatrix::from_element(1, 1, 0.12)).unwrap();
        assert!((p.mean - post.mean[0]).abs() < 1e-12);
        assert!((p.variance - post.covariance[(0, 0)]).abs() < 1e-12);
        let h = 1e-6;
        let pp = model.predict_point(&[0.12 + h]).unwrap();
        let pm = model.predict_point(&[0.12 - h]).unwrap();
        assert!((p.mean_gradient[0] - (pp.mean - pm.mean) / (2.0 * h)).abs() < 1e-5);
        assert!((p.variance_gradient[0] - (pp.variance - pm.variance) / (2.0 * h)).abs() < 1e-5);
    }
}

//! Dense symmetric-matrix helpers.
//!
//! Half-vectorization convention used throughout: `vec_u` stacks the upper
//! triangle column by column, `(0,0), (0,1), (1,1), (0,2), (1,2), (2,2), ...`,
//! with no scaling. [`unvec_u`] is its exact right inverse on symmetric
//! matrices, so a unit entry at an off-diagonal position unpacks to the
//! symmetric pair `e_p e_q^T + e_q e_p^T`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{Error, Result};

pub fn sym_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of the upper-triangle entry `(p, q)`, `p <= q`, inside `vec_u`.
#[inline]
pub fn vec_u_index(p: usize, q: usize) -> usize {
    debug_assert!(p <= q);
    q * (q + 1) / 2 + p
}

pub fn vec_u(a: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut out = DVector::zeros(sym_dim(n));
    for q in 0..n {
        for p in 0..=q {
            out[vec_u_index(p, q)] = a[(p, q)];
        }
    }
    out
}

pub fn unvec_u(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), sym_dim(n));
    let mut a = DMatrix::zeros(n, n);
    for q in 0..n {
        for p in 0..=q {
            let x = v[vec_u_index(p, q)];
            a[(p, q)] = x;
            a[(q, p)] = x;
        }
    }
    a
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Frobenius inner product `<A, B> = tr(A^T B)`.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    SymmetricEigen::new(a.clone())
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    eigen(a).eigenvalues.max()
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    eigen(a).eigenvalues.min()
}

/// Euclidean projection onto the positive semidefinite cone.
pub fn project_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = eigen(a);
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 0.0 {
            let v = eig.eigenvectors.column(j);
            out.ger(lambda, &v, &v, 1.0);
        }
    }
    symmetrize(&mut out);
    out
}

/// Dominant eigenpair `(lambda, u)` of a symmetric matrix, `u` unit norm.
pub fn dominant_eigenpair(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = eigen(a);
    let j = eig.eigenvalues.imax();
    (eig.eigenvalues[j], eig.eigenvectors.column(j).into_owned())
}

/// Factorization of a larger square system (Schur complements, reduced Newton
/// systems). Backed by faer, which is several times faster than nalgebra's
/// unblocked kernels at the sizes reached for batch size 40.
pub enum DenseFactor {
    Cholesky(faer::linalg::solvers::Llt<f64>),
    Lu(faer::linalg::solvers::PartialPivLu<f64>),
}

impl DenseFactor {
    pub fn lu(a: &DMatrix<f64>) -> Self {
        Self::Lu(to_faer(a).partial_piv_lu())
    }

    /// Cholesky when `a` is numerically positive definite, pivoted LU otherwise.
    pub fn cholesky_or_lu(a: &DMatrix<f64>) -> Self {
        let f = to_faer(a);
        match f.llt(faer::Side::Lower) {
            Ok(llt) => Self::Cholesky(llt),
            Err(_) => Self::Lu(f.partial_piv_lu()),
        }
    }

    /// `min |u_jj| / max |u_jj|` over the triangular factor (squared for Cholesky).
    pub fn pivot_ratio(&self) -> f64 {
        let (diag, power) = match self {
            Self::Cholesky(llt) => (llt.L().diagonal().column_vector().iter().map(|v| v.abs()).collect::<Vec<_>>(), 2),
            Self::Lu(lu) => (lu.U().diagonal().column_vector().iter().map(|v| v.abs()).collect::<Vec<_>>(), 1),
        };
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if max > 0.0 {
            (min / max).powi(power)
        } else {
            0.0
        }
    }

    /// `None` when the result is not finite.
    pub fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        use faer::linalg::solvers::Solve;
        let mut x = faer::Mat::from_fn(b.len(), 1, |i, _| b[i]);
        match self {
            Self::Cholesky(llt) => llt.solve_in_place(&mut x),
            Self::Lu(lu) => lu.solve_in_place(&mut x),
        }
        let x = DVector::from_fn(b.len(), |i, _| x[(i, 0)]);
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Cholesky factorization of `a + jitter * I`, escalating `jitter` by a factor
/// of ten from `start` up to `max` until the factorization succeeds.
pub fn cholesky_with_jitter(
    a: &DMatrix<f64>,
    start: f64,
    max: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = a.nrows();
    let mut jitter = start;
    loop {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok((chol, jitter));
        }
        if jitter >= max * (1.0 - 1e-12) {
            return Err(Error::IllConditioned { jitter });
        }
        jitter = (jitter * 10.0).min(max);
    }
}

/// Solve `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    l.solve_lower_triangular(b)
        .expect("triangular factor from a successful Cholesky is nonsingular")
}

/// Rows of a matrix as owned vectors, convenient for kernel evaluations.
pub fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_u_roundtrip_and_ordering() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 4.0, 2.0, 3.0, 5.0, 4.0, 5.0, 6.0]);
        let v = vec_u(&a);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(unvec_u(&v, 3), a);
    }

    #[test]
    fn psd_projection_clamps_negative_part() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let p = project_psd(&a);
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(p[(1, 1)].abs() < 1e-14);
    }

    #[test]
    fn jitter_escalates_then_fails() {
        // Rank one, so the plain factorization fails but a tiny jitter fixes it.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, j) = cholesky_with_jitter(&a, 1e-8, 1e-2).unwrap();
        assert!(j >= 1e-8);
        let neg = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(matches!(
            cholesky_with_jitter(&neg, 1e-6, 1e-2),
            Err(Error::IllConditioned { .. })
        ));
    }
}

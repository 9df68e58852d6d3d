//! Linearized optimality system of the rank-one parametrization.
//!
//! Unknowns are a symmetric `dM` and one `dy_i` per active atom; equations are
//!
//! ```text
//! S_i dy_i + dM y_i = h_i                       (S_i = M - C_i)
//! sum_i (dy_i y_i^T + y_i dy_i^T)   = G
//! ```
//!
//! Each `S_i` has a one-dimensional (near-)null space spanned by its top
//! eigenvector `n_i`. Writing `dy_i = P_i (h_i - dM y_i) + c_i n_i` with `P_i`
//! the inverse of `S_i` on the complement eliminates the atoms and leaves a dense square system in
//! `(vec_u(dM), c)`, factored once and reused for any number of right-hand sides.
//! With `h = 0` and `G = dOmega` the solution is the derivative of the optimizer;
//! with the negated KKT residuals it is a Newton step.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{eigen, sym_dim, unvec_u, vec_u, vec_u_index, DenseFactor};
use crate::{Error, Result};

/// Relative spectral gap required between the null eigenvalue of `S_i` and the rest.
const GAP_TOLERANCE: f64 = 1e-9;
/// Smallest acceptable `min |u_jj| / max |u_jj|` of the LU factor.
const PIVOT_TOLERANCE: f64 = 1e-13;

pub(crate) struct ReducedKkt {
    n: usize,
    atoms: Vec<DVector<f64>>,
    active: Vec<usize>,
    pinv: Vec<DMatrix<f64>>,
    null: Vec<DVector<f64>>,
    lu: DenseFactor,
}

impl ReducedKkt {
    pub fn new(
        m: &DMatrix<f64>,
        constraints: &[DMatrix<f64>],
        atoms: &[DVector<f64>],
        active: &[bool],
        strict: bool,
    ) -> Result<Self> {
        let n = m.nrows();
        let big_n = sym_dim(n);
        let active_idx: Vec<usize> = (0..atoms.len()).filter(|&i| active[i]).collect();
        // An inactive atom is only stable when its slack is strictly negative.
        for i in (0..atoms.len()).filter(|&i| strict && !active[i]) {
            let s = m - &constraints[i];
            let top = crate::linalg::max_eigenvalue(&s);
            if top > -GAP_TOLERANCE * (1.0 + s.norm()) {
                return Err(Error::SingularDerivativeSystem(format!(
                    "constraint {i} is weakly active (slack eigenvalue {top:.3e})"
                )));
            }
        }
        let mut pinv = Vec::with_capacity(active_idx.len());
        let mut top_values = Vec::with_capacity(active_idx.len());
        let mut null = Vec::with_capacity(active_idx.len());
        for &i in &active_idx {
            let s = m - &constraints[i];
            let eig = eigen(&s);
            let top = eig.eigenvalues.imax();
            let mut second = f64::NEG_INFINITY;
            let mut spread: f64 = 0.0;
            for (j, &l) in eig.eigenvalues.iter().enumerate() {
                spread = spread.max(l.abs());
                if j != top {
                    second = second.max(l);
                }
            }
            if strict && second > -GAP_TOLERANCE * (1.0 + spread) {
                return Err(Error::SingularDerivativeSystem(format!(
                    "constraint {i} has a degenerate slack (second eigenvalue {second:.3e})"
                )));
            }
            let mut p = DMatrix::zeros(n, n);
            for j in 0..n {
                if j == top || eig.eigenvalues[j] == 0.0 {
                    continue;
                }
                let v = eig.eigenvectors.column(j);
                p.ger(1.0 / eig.eigenvalues[j], &v, &v, 1.0);
            }
            pinv.push(p);
            top_values.push(eig.eigenvalues[top]);
            null.push(eig.eigenvectors.column(top).into_owned());
        }

        let na = active_idx.len();
        let dim = big_n + na;
        let mut a = DMatrix::zeros(dim, dim);
        let mut w = DVector::zeros(n);
        for q in 0..n {
            for p in 0..=q {
                let col = vec_u_index(p, q);
                for (slot, &i) in active_idx.iter().enumerate() {
                    let y = &atoms[i];
                    let pi = &pinv[slot];
                    // w = P_i E_pq y_i
                    w.copy_from(&pi.column(p));
                    w *= y[q];
                    if p != q {
                        w.axpy(y[p], &pi.column(q), 1.0);
                    }
                    for b in 0..n {
                        for a_ in 0..=b {
                            a[(vec_u_index(a_, b), col)] -= w[a_] * y[b] + y[a_] * w[b];
                        }
                    }
                    let nv = &null[slot];
                    let mut row = nv[p] * y[q];
                    if p != q {
                        row += nv[q] * y[p];
                    }
                    a[(big_n + slot, col)] = row;
                }
            }
        }
        for (slot, &i) in active_idx.iter().enumerate() {
            let y = &atoms[i];
            let nv = &null[slot];
            for b in 0..n {
                for a_ in 0..=b {
                    a[(vec_u_index(a_, b), big_n + slot)] = nv[a_] * y[b] + y[a_] * nv[b];
                }
            }
            // Zero at an exact solution; away from it this keeps the step exact Newton.
            a[(big_n + slot, big_n + slot)] = top_values[slot];
        }

        let lu = DenseFactor::lu(&a);
        let ratio = lu.pivot_ratio();
        if strict && !(ratio > PIVOT_TOLERANCE) {
            return Err(Error::SingularDerivativeSystem(format!(
                "reduced system is numerically singular (pivot ratio {ratio:.3e})"
            )));
        }
        Ok(Self { n, atoms: atoms.to_vec(), active: active_idx, pinv, null, lu })
    }

    /// Solves for `(dM, dy)`; inactive atoms get `dy_i = 0`.
    pub fn solve(&self, g: &DMatrix<f64>, h: &[DVector<f64>]) -> Result<(DMatrix<f64>, Vec<DVector<f64>>)> {
        let n = self.n;
        let big_n = sym_dim(n);
        let mut top = g.clone();
        let mut bottom = Vec::with_capacity(self.active.len());
        for (slot, &i) in self.active.iter().enumerate() {
            let y = &self.atoms[i];
            let ph = &self.pinv[slot] * &h[i];
            let t = &ph * y.transpose();
            top -= &t;
            top -= t.transpose();
            bottom.push(self.null[slot].dot(&h[i]));
        }
        let mut rhs = DVector::zeros(big_n + self.active.len());
        rhs.rows_mut(0, big_n).copy_from(&vec_u(&top));
        for (slot, b) in bottom.into_iter().enumerate() {
            rhs[big_n + slot] = b;
        }
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularDerivativeSystem("non-finite solution".into()))?;
        let dm = unvec_u(&sol.rows(0, big_n).into_owned(), n);
        let mut dy = vec![DVector::zeros(n); self.atoms.len()];
        for (slot, &i) in self.active.iter().enumerate() {
            let rhs_i = &h[i] - &dm * &self.atoms[i];
            dy[i] = &self.pinv[slot] * rhs_i + &self.null[slot] * sol[big_n + slot];
        }
        Ok((dm, dy))
    }
}

//! Infeasible primal-dual interior point method with the HKM search direction
//! and Mehrotra's predictor-corrector.
//!
//! Works on the block form: primal `Y_i >= 0` with `sum_i Y_i = Omega`, dual
//! slacks `S_i = C_i - M`. The dual iterate is kept feasible throughout, so
//! only the primal equality residual and the complementarity gap need driving
//! to zero. Each iteration factors the Schur complement over symmetric
//! directions `dM`, which has size `(k+1)(k+2)/2`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::linalg::{min_eigenvalue, symmetrize, DenseFactor};

const STEP_FRACTION: f64 = 0.95;
const MIN_STEP: f64 = 1e-10;
/// A converging interior point method needs a few dozen iterations; more means
/// it is stuck at the limits of floating point.
const MAX_INTERIOR_ITERATIONS: usize = 200;
/// Iterations without a 1% decrease of the worse of residual and gap before
/// giving up.
const STALL_LIMIT: usize = 5;

pub(super) struct InteriorPoint {
    pub m: DMatrix<f64>,
    pub y: Vec<DMatrix<f64>>,
    pub iterations: usize,
}

/// Runs until primal infeasibility and relative gap are both below `tol`, a
/// step length collapses, progress stalls, or the iteration cap is reached.
pub(super) fn solve(omega: &DMatrix<f64>, c: &[DMatrix<f64>], tol: f64, max_iterations: usize) -> InteriorPoint {
    let n = omega.nrows();
    let blocks = c.len();
    // Every slack `C_i - M` starts with eigenvalues of at least one.
    let shift = 1.0 + c.iter().map(|ci| -min_eigenvalue(ci)).fold(0.0, f64::max);
    let mut m = DMatrix::identity(n, n) * -shift;
    let mut y: Vec<DMatrix<f64>> = vec![omega / blocks as f64; blocks];
    let omega_norm = omega.norm();
    let basis = Basis::new(n);

    let max_iterations = max_iterations.min(MAX_INTERIOR_ITERATIONS);
    let mut iterations = 0;
    let (mut best, mut stalled) = (f64::INFINITY, 0);
    while iterations < max_iterations {
        let s: Vec<DMatrix<f64>> = c.iter().map(|ci| ci - &m).collect();
        let Some(s_inv) = s.iter().map(|si| si.clone().cholesky().map(|ch| ch.inverse())).collect::<Option<Vec<_>>>()
        else {
            break;
        };
        let mut rp = omega.clone();
        let mut gap = 0.0;
        let mut pobj = 0.0;
        for i in 0..blocks {
            rp -= &y[i];
            gap += y[i].dot(&s[i]);
            pobj += y[i].dot(&c[i]);
        }
        let dobj = omega.dot(&m);
        let mu = gap / (n * blocks) as f64;
        let (primal, rel_gap) = (rp.norm() / (1.0 + omega_norm), gap / (1.0 + pobj.abs() + dobj.abs()));
        if primal <= tol && rel_gap <= tol {
            break;
        }
        let worst = primal.max(rel_gap);
        if worst < 0.99 * best {
            (best, stalled) = (worst, 0);
        } else {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                break;
            }
        }

        let h = basis.schur(&y, &s_inv);
        if h.iter().any(|v| !v.is_finite()) {
            break;
        }
        // Cholesky can fail in late iterations, when the `Y_i` are close to rank one.
        let schur = DenseFactor::cholesky_or_lu(&h);
        let direction = |k_terms: &[DMatrix<f64>]| {
            let mut rhs = rp.clone();
            for ki in k_terms {
                rhs -= ki;
            }
            let x = schur.solve(&basis.svec(&rhs))?;
            let dm = basis.smat(&x);
            let dy: Vec<DMatrix<f64>> = (0..blocks)
                .map(|i| {
                    let mut d = &k_terms[i] + &y[i] * &dm * &s_inv[i];
                    symmetrize(&mut d);
                    d
                })
                .collect();
            Some((dm, dy))
        };

        // Predictor: sigma = 0.
        let k_aff: Vec<DMatrix<f64>> = y.iter().map(|yi| -yi).collect();
        let Some((dm_aff, dy_aff)) = direction(&k_aff) else { break };
        let ds_aff = -&dm_aff;
        let ap = primal_step(&y, &dy_aff);
        let ad = dual_step(&s, &ds_aff);
        let mut gap_aff = 0.0;
        for i in 0..blocks {
            gap_aff += (&y[i] + &dy_aff[i] * ap).dot(&(&s[i] + &ds_aff * ad));
        }
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let k_cor: Vec<DMatrix<f64>> = (0..blocks)
            .map(|i| {
                let mut ki = &s_inv[i] * (sigma * mu) - &y[i] - &dy_aff[i] * &ds_aff * &s_inv[i];
                symmetrize(&mut ki);
                ki
            })
            .collect();
        let Some((dm, dy)) = direction(&k_cor) else { break };
        let ap = primal_step(&y, &dy);
        let ad = dual_step(&s, &-&dm);
        iterations += 1;
        for (yi, di) in y.iter_mut().zip(&dy) {
            *yi += di * ap;
        }
        m += &dm * ad;
        if ap.min(ad) < MIN_STEP {
            break;
        }
    }
    InteriorPoint { m, y, iterations }
}

fn primal_step(x: &[DMatrix<f64>], dx: &[DMatrix<f64>]) -> f64 {
    x.iter().zip(dx).map(|(xi, di)| max_step(xi, di)).fold(1.0, f64::min)
}

fn dual_step(s: &[DMatrix<f64>], ds: &DMatrix<f64>) -> f64 {
    s.iter().map(|si| max_step(si, ds)).fold(1.0, f64::min)
}

/// Fraction of the distance to the boundary of the PSD cone along `d`, capped at one.
fn max_step(x: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let Some(ch) = Cholesky::<f64, Dyn>::new(x.clone()) else { return 0.0 };
    let l = ch.l();
    let w = l.solve_lower_triangular(d).and_then(|a| l.solve_lower_triangular(&a.transpose()));
    let Some(mut w) = w else { return 0.0 };
    symmetrize(&mut w);
    let lmin = min_eigenvalue(&w);
    if lmin >= 0.0 {
        1.0
    } else {
        (STEP_FRACTION / -lmin).min(1.0)
    }
}

/// Orthonormal basis of symmetric matrices: `e_p e_p^T` and
/// `(e_p e_q^T + e_q e_p^T) / sqrt(2)`.
struct Basis {
    n: usize,
    pairs: Vec<(usize, usize, f64)>,
}

impl Basis {
    fn new(n: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        for q in 0..n {
            for p in 0..=q {
                // Weight w with B = w (e_p e_q^T + e_q e_p^T).
                let w = if p == q { 0.5 } else { std::f64::consts::FRAC_1_SQRT_2 };
                pairs.push((p, q, w));
            }
        }
        Self { n, pairs }
    }

    fn svec(&self, a: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.pairs.len(), self.pairs.iter().map(|&(p, q, w)| w * (a[(p, q)] + a[(q, p)])))
    }

    fn smat(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (&(p, q, w), &v) in self.pairs.iter().zip(x.iter()) {
            let e = if p == q { v } else { w * v };
            a[(p, q)] = e;
            a[(q, p)] = e;
        }
        a
    }

    /// `H_ab = sum_i tr(B_a Y_i B_b Z_i)`, symmetric positive definite.
    ///
    /// For `b = (r, s)` all entries come from `T = sum_i Y_i e_r e_s^T Z_i + (r <-> s)`,
    /// formed as two products of `n x blocks` column stacks; only the leading
    /// `(s+1) x (s+1)` block of `T` is needed for the upper triangle.
    fn schur(&self, y: &[DMatrix<f64>], z: &[DMatrix<f64>]) -> DMatrix<f64> {
        let n = self.n;
        let blocks = y.len();
        // cols[r] = [Y_0 e_r, ..., Y_k e_r]; rows[s] = [Z_0 e_s, ..., Z_k e_s]^T.
        let cols: Vec<DMatrix<f64>> =
            (0..n).map(|r| DMatrix::from_fn(n, blocks, |a, i| y[i][(a, r)])).collect();
        let rows: Vec<DMatrix<f64>> =
            (0..n).map(|s| DMatrix::from_fn(blocks, n, |i, a| z[i][(s, a)])).collect();
        let dim = self.pairs.len();
        let mut h = DMatrix::zeros(dim, dim);
        let mut t = DMatrix::zeros(n, n);
        for (b, &(r, s, wb)) in self.pairs.iter().enumerate() {
            let m = s + 1;
            let mut tv = t.view_mut((0, 0), (m, m));
            tv.gemm(1.0, &cols[r].rows(0, m), &rows[s].columns(0, m), 0.0);
            tv.gemm(1.0, &cols[s].rows(0, m), &rows[r].columns(0, m), 1.0);
            for (a, &(p, q, wa)) in self.pairs.iter().enumerate().take(b + 1) {
                h[(a, b)] = wa * wb * (t[(q, p)] + t[(p, q)]);
            }
        }
        for b in 0..dim {
            for a in 0..b {
                h[(b, a)] = h[(a, b)];
            }
        }
        h
    }
}

use nalgebra::{DMatrix, DVector};

use super::constraint;
use crate::linalg::symmetrize;

/// Congruence `Omega' = A Omega A^T` applied to the whole program, with an
/// extra positive scale on the objective.
///
/// Multipliers map as `M = scale * A^T M' A`, dual atoms as `y = A^{-1} y'`,
/// and constraints as `C_i' = A^{-T} C_i A^{-1} / scale`, so values satisfy
/// `p(Omega) = scale * p'(Omega')`.
#[derive(Debug, Clone)]
pub(crate) struct Frame {
    pub scale: f64,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    constraints: Vec<DMatrix<f64>>,
}

impl Frame {
    /// Moves the incumbent to zero and scales improvements to unit RMS.
    pub fn centered(omega: &DMatrix<f64>, incumbent: f64) -> Self {
        let k = omega.nrows() - 1;
        let mut ms = 0.0;
        for i in 0..k {
            ms += omega[(i, i)] - 2.0 * incumbent * omega[(i, k)] + incumbent * incumbent;
        }
        ms /= k as f64;
        let scale = if ms.is_finite() && ms > 0.0 { ms.sqrt() } else { 1.0 };
        Self::shift_scale(k, incumbent, scale)
    }

    pub fn shift_scale(k: usize, shift: f64, scale: f64) -> Self {
        let n = k + 1;
        let mut a = DMatrix::zeros(n, n);
        let mut a_inv = DMatrix::zeros(n, n);
        for i in 0..k {
            a[(i, i)] = 1.0 / scale;
            a[(i, k)] = -shift / scale;
            a_inv[(i, i)] = scale;
            a_inv[(i, k)] = shift;
        }
        a[(k, k)] = 1.0;
        a_inv[(k, k)] = 1.0;
        let constraints = (0..n).map(|i| constraint(k, i, 0.0)).collect();
        Self { scale, a, a_inv, constraints }
    }

    /// Composes with the inverse Cholesky factor of the moment matrix in this
    /// frame, so the transformed moment matrix is the identity.
    pub fn whitened(self, omega: &DMatrix<f64>) -> Option<Self> {
        let chol = self.moment_forward(omega).cholesky()?;
        let l = chol.l();
        let l_inv = l.clone().try_inverse()?;
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                let mut out = l.transpose() * c * &l;
                symmetrize(&mut out);
                out
            })
            .collect();
        Some(Self { scale: self.scale, a: l_inv * self.a, a_inv: self.a_inv * l, constraints })
    }

    pub fn constraints(&self) -> &[DMatrix<f64>] {
        &self.constraints
    }

    pub fn moment_forward(&self, omega: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.a * omega * self.a.transpose();
        symmetrize(&mut out);
        out
    }

    pub fn m_forward(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.a_inv.transpose() * m * &self.a_inv / self.scale;
        symmetrize(&mut out);
        out
    }

    pub fn m_backward(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.a.transpose() * m * &self.a * self.scale;
        symmetrize(&mut out);
        out
    }

    pub fn atom_forward(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.a * y
    }

    pub fn atom_backward(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.a_inv * y
    }
}

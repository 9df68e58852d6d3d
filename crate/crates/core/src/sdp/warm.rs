use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SdpSolution;
use crate::{Error, Result};

/// Primal and dual iterates used to initialize a solve, in original units.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WarmStart {
    pub m: DMatrix<f64>,
    pub atoms: Vec<DVector<f64>>,
    /// ADMM penalty in the normalized frame, if known.
    pub rho: Option<f64>,
}

impl WarmStart {
    pub fn from_solution(sol: &SdpSolution) -> Self {
        Self { m: sol.m_bar.clone(), atoms: sol.dual_factors.clone(), rho: None }
    }

    pub fn k(&self) -> usize {
        self.m.nrows() - 1
    }
}

/// Previous iterates moved along the solution derivative in direction
/// `delta_omega`. Falls back to the plain warm start when the derivative system
/// cannot be solved.
pub fn first_order_warm_start(prev: &SdpSolution, delta_omega: &DMatrix<f64>) -> Result<WarmStart> {
    let n = prev.k() + 1;
    if delta_omega.nrows() != n || delta_omega.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: delta_omega.nrows() });
    }
    let plain = WarmStart::from_solution(prev);
    if delta_omega.iter().all(|v| *v == 0.0) {
        return Ok(plain);
    }
    match crate::oei::solution_derivative(prev, delta_omega) {
        Ok(d) => Ok(WarmStart {
            m: &plain.m + &d.m_dot,
            atoms: plain.atoms.iter().zip(&d.y_dot).map(|(y, dy)| y + dy).collect(),
            rho: None,
        }),
        Err(e) => {
            log::debug!("first-order warm start unavailable: {e}");
            Ok(plain)
        }
    }
}

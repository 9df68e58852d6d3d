use nalgebra::{DMatrix, DVector};

use crate::sdp::kkt::ReducedKkt;
use crate::sdp::{Frame, SdpSolution};
use crate::{Error, Result};

/// Directional derivative of the SDP solution map.
#[derive(Debug, Clone)]
pub struct SolutionDerivative {
    pub m_dot: DMatrix<f64>,
    pub y_dot: Vec<DVector<f64>>,
}

/// Factored linear system for `(dM, dy_i)` at a converged solution. Built
/// once, then solved for any number of directions `dOmega`.
pub struct DerivativeSystem {
    frame: Frame,
    n: usize,
    kkt: ReducedKkt,
}

impl DerivativeSystem {
    pub fn new(sol: &SdpSolution) -> Result<Self> {
        if !sol.converged {
            return Err(Error::InvalidArgument("solution derivative needs a converged solution".into()));
        }
        let norm = &sol.normalized;
        let n = sol.k() + 1;
        let kkt = ReducedKkt::new(&norm.m, norm.frame.constraints(), &norm.atoms, &sol.active, true)?;
        Ok(Self { frame: norm.frame.clone(), n, kkt })
    }

    /// Derivative of `(M, y_i)` along the symmetric direction `d_omega`.
    pub fn direction(&self, d_omega: &DMatrix<f64>) -> Result<SolutionDerivative> {
        if d_omega.nrows() != self.n || d_omega.ncols() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: d_omega.nrows() });
        }
        let g = self.frame.moment_forward(d_omega);
        let h = vec![DVector::zeros(self.n); self.n];
        let (dm, dy) = self.kkt.solve(&g, &h)?;
        Ok(SolutionDerivative {
            m_dot: self.frame.m_backward(&dm),
            y_dot: dy.iter().map(|d| self.frame.atom_backward(d)).collect(),
        })
    }

    /// `dM` only, for Hessian assembly.
    pub fn m_dot(&self, d_omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.direction(d_omega)?.m_dot)
    }
}

/// Factors the system and solves for one direction.
pub fn solution_derivative(sol: &SdpSolution, d_omega: &DMatrix<f64>) -> Result<SolutionDerivative> {
    DerivativeSystem::new(sol)?.direction(d_omega)
}

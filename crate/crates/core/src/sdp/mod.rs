//! The structured SDP whose value is the OEI acquisition:
//!
//! ```text
//! p(Omega) = sup <Omega, M>  s.t.  M - C_i <= 0,  i = 0..k
//! ```
//!
//! with `C_0 = 0` and `C_i` holding `e_i / 2` on the border and `-y_min` in
//! the corner. The dual is `inf sum_i <Y_i, C_i>` over `Y_i >= 0` with
//! `sum_i Y_i = Omega`; at optimality every `Y_i` has rank one.
//!
//! Problems are solved in a transformed frame: incumbent moved to zero, unit
//! RMS improvement scale, then whitened so the moment matrix is the identity.
//! The program is invariant under these congruences, so the solution maps
//! back exactly, and the interior point iterates stay well conditioned even
//! for near-deterministic posteriors.

mod admm;
mod frame;
mod ipm;
pub(crate) mod kkt;
mod solver;
mod warm;

pub use solver::{solve, SdpMethod, SdpSettings, SdpSolver};
pub use warm::{first_order_warm_start, WarmStart};

pub(crate) use frame::Frame;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::gp::MomentMatrix;
use crate::linalg::{eigen, inner};
use crate::{Error, Result};

/// Relative eigenvalue floor below which a moment matrix is refused.
pub const DEGENERACY_THRESHOLD: f64 = 1e-9;
/// Dual atoms with `|y|^2 < ACTIVE_THRESHOLD * trace(Omega)` are inactive.
pub const ACTIVE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SdpProblem {
    omega: DMatrix<f64>,
    incumbent: f64,
    frame: Frame,
    omega_n: DMatrix<f64>,
}

impl SdpProblem {
    /// Builds the problem for a moment matrix and incumbent. Refuses
    /// numerically singular moment matrices (duplicate batch points).
    pub fn new(omega: &MomentMatrix, incumbent: f64) -> Result<Self> {
        if !incumbent.is_finite() {
            return Err(Error::InvalidArgument("incumbent must be finite".into()));
        }
        let omega = omega.matrix().clone();
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("moment matrix has non-finite entries".into()));
        }
        let frame = Frame::centered(&omega, incumbent);
        let centered = frame.moment_forward(&omega);
        let min_eig = eigen(&centered).eigenvalues.min();
        let threshold = DEGENERACY_THRESHOLD * centered.trace();
        if !(min_eig >= threshold) {
            return Err(Error::DegeneratePosterior { min_eigenvalue: min_eig, threshold });
        }
        let frame = match frame.clone().whitened(&omega) {
            Some(w) => w,
            None => frame,
        };
        let omega_n = frame.moment_forward(&omega);
        Ok(Self { omega, incumbent, frame, omega_n })
    }

    pub fn k(&self) -> usize {
        self.omega.nrows() - 1
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn incumbent(&self) -> f64 {
        self.incumbent
    }

    /// `C_i` in original units; `C_0` is zero.
    pub fn constraint(&self, i: usize) -> DMatrix<f64> {
        constraint(self.k(), i, self.incumbent)
    }

    pub(crate) fn frame(&self) -> &Frame {
        &self.frame
    }

    pub(crate) fn omega_normalized(&self) -> &DMatrix<f64> {
        &self.omega_n
    }
}

pub(crate) fn constraint(k: usize, i: usize, incumbent: f64) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(k + 1, k + 1);
    if i > 0 {
        c[(i - 1, k)] = 0.5;
        c[(k, i - 1)] = 0.5;
        c[(k, k)] = -incumbent;
    }
    c
}

/// Primal-infeasibility, dual-infeasibility and duality-gap measures, all on the
/// normalized problem.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Residuals {
    /// `max_i lambda_max(M - C_i)^+`.
    pub primal: f64,
    /// `||sum_i Y_i - Omega||_F / (1 + ||Omega||_F)`.
    pub dual: f64,
    /// `|primal - dual objective| / (1 + |primal| + |dual|)`.
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

/// Solution state in the normalized frame, kept for derivatives and warm starts.
#[derive(Debug, Clone)]
pub(crate) struct NormalizedSolution {
    pub frame: Frame,
    pub m: DMatrix<f64>,
    pub atoms: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SdpSolution {
    /// Primal optimizer, equal to the gradient of the value in `Omega`.
    pub m_bar: DMatrix<f64>,
    pub value: f64,
    pub dual_value: f64,
    /// Rank-one dual factors, `Y_i = y_i y_i^T`, last component non-negative.
    pub dual_factors: Vec<DVector<f64>>,
    pub active: Vec<bool>,
    pub residuals: Residuals,
    /// Largest `lambda_2 / lambda_1` over the active dual matrices found by the
    /// cold solver, before the rank-one refinement. Zero after a warm start,
    /// which never forms full dual matrices.
    pub rank_one_defect: f64,
    pub iterations: usize,
    pub interior_iterations: usize,
    pub admm_iterations: usize,
    pub newton_iterations: usize,
    pub converged: bool,
    pub incumbent: f64,
    pub omega: DMatrix<f64>,
    #[serde(skip_serializing)]
    pub(crate) normalized: NormalizedSolution,
}

impl SdpSolution {
    pub fn k(&self) -> usize {
        self.omega.nrows() - 1
    }

    pub fn constraint(&self, i: usize) -> DMatrix<f64> {
        constraint(self.k(), i, self.incumbent)
    }

    /// `Y_i = y_i y_i^T`.
    pub fn dual_matrix(&self, i: usize) -> DMatrix<f64> {
        let y = &self.dual_factors[i];
        y * y.transpose()
    }

    /// Complementary slackness `<Y_i, M - C_i>`, one per constraint.
    pub fn complementarity(&self) -> Vec<f64> {
        (0..=self.k())
            .map(|i| inner(&self.dual_matrix(i), &(&self.m_bar - self.constraint(i))))
            .collect()
    }
}

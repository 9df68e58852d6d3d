use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::sdp::SdpSolution;

/// Atoms with `|w_i|` below this are dropped from the distribution.
const WEIGHT_FLOOR: f64 = 1e-8;

/// Discrete distribution on at most `k + 1` outcomes attaining the SDP value.
#[derive(Debug, Clone, Serialize)]
pub struct WorstCaseDistribution {
    pub atoms: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    /// False when some active factor had a vanishing last component.
    pub complete: bool,
    /// Total weight before renormalization.
    pub raw_weight: f64,
}

/// `min(xi_1, ..., xi_k, y) - y`.
pub fn improvement(xi: &DVector<f64>, incumbent: f64) -> f64 {
    xi.iter().fold(incumbent, |a, &b| a.min(b)) - incumbent
}

impl WorstCaseDistribution {
    pub fn mean(&self) -> DVector<f64> {
        let k = self.atoms.first().map_or(0, |a| a.len());
        self.atoms.iter().zip(&self.weights).fold(DVector::zeros(k), |acc, (a, w)| acc + a * *w)
    }

    /// Moment matrix `E[[xi; 1][xi; 1]^T]`.
    pub fn moment_matrix(&self) -> DMatrix<f64> {
        let k = self.atoms.first().map_or(0, |a| a.len());
        let mut out = DMatrix::zeros(k + 1, k + 1);
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            let v = a.clone().insert_row(k, 1.0);
            out.ger(*w, &v, &v, 1.0);
        }
        out
    }

    pub fn expected_improvement(&self, incumbent: f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| w * improvement(a, incumbent)).sum()
    }
}

/// Reads atoms `z_i / w_i` with weights `w_i^2` off the dual factors
/// `y_i = (z_i; w_i)`.
pub fn worst_case_distribution(sol: &SdpSolution) -> WorstCaseDistribution {
    let k = sol.k();
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let mut complete = true;
    for (y, &active) in sol.dual_factors.iter().zip(&sol.active) {
        if !active {
            continue;
        }
        let w = y[k];
        if w.abs() <= WEIGHT_FLOOR {
            complete = false;
            continue;
        }
        atoms.push(y.rows(0, k) / w);
        weights.push(w * w);
    }
    let raw_weight: f64 = weights.iter().sum();
    if raw_weight > 0.0 {
        weights.iter_mut().for_each(|w| *w /= raw_weight);
    }
    WorstCaseDistribution { atoms, weights, complete, raw_weight }
}

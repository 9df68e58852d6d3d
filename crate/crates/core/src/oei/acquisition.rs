use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::DerivativeSystem;
use crate::gp::{marginalized_moment_matrix, GpModel, KernelFamily, MomentMatrix};
use crate::linalg::{inner, symmetrize};
use crate::sdp::{SdpProblem, SdpSolution, SdpSolver};
use crate::{Error, Result};

/// Rows closer than this fraction of the domain diameter count as duplicates.
pub const DUPLICATE_DISTANCE: f64 = 1e-6;
/// Magnitude of the uniform perturbation applied to duplicates, as a fraction
/// of the domain diameter.
pub const DUPLICATE_JITTER: f64 = 1e-5;

const DUPLICATE_SEED: u64 = 0x0e1_d0b1e;

/// Anything that maps a batch to its moment matrix, with derivatives.
pub trait MomentModel: Sync {
    fn dimension(&self) -> usize;
    fn incumbent(&self) -> Result<f64>;
    fn moment_matrix(&self, x: &DMatrix<f64>) -> Result<MomentMatrix>;
    /// `d Omega / d vec(X)`, column-major `vec`.
    fn moment_matrix_jacobian(&self, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>>;
    /// Whether second derivatives of `Omega` exist everywhere.
    fn twice_differentiable(&self) -> bool;
}

impl MomentModel for GpModel {
    fn dimension(&self) -> usize {
        self.dataset().dimension()
    }

    fn incumbent(&self) -> Result<f64> {
        GpModel::incumbent(self)
    }

    fn moment_matrix(&self, x: &DMatrix<f64>) -> Result<MomentMatrix> {
        GpModel::moment_matrix(self, x)
    }

    fn moment_matrix_jacobian(&self, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        GpModel::moment_matrix_jacobian(self, x)
    }

    fn twice_differentiable(&self) -> bool {
        self.kernel().family == KernelFamily::SquaredExponential
    }
}

/// Hyperparameter samples combined through the averaged moment matrix, so one
/// SDP solve covers every sample.
#[derive(Debug, Clone)]
pub struct MarginalizedModel {
    models: Vec<GpModel>,
}

impl MarginalizedModel {
    pub fn new(models: Vec<GpModel>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::InvalidArgument("need at least one hyperparameter sample".into()))?;
        let n = first.dataset().dimension();
        if let Some(bad) = models.iter().find(|m| m.dataset().dimension() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.dataset().dimension() });
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[GpModel] {
        &self.models
    }
}

impl MomentModel for MarginalizedModel {
    fn dimension(&self) -> usize {
        self.models[0].dataset().dimension()
    }

    fn incumbent(&self) -> Result<f64> {
        self.models[0].incumbent()
    }

    fn moment_matrix(&self, x: &DMatrix<f64>) -> Result<MomentMatrix> {
        let omegas = self.models.iter().map(|m| m.moment_matrix(x)).collect::<Result<Vec<_>>>()?;
        marginalized_moment_matrix(&omegas)
    }

    fn moment_matrix_jacobian(&self, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        let q = self.models.len() as f64;
        let mut acc = self.models[0].moment_matrix_jacobian(x)?;
        for m in &self.models[1..] {
            for (a, b) in acc.iter_mut().zip(m.moment_matrix_jacobian(x)?) {
                *a += b;
            }
        }
        acc.iter_mut().for_each(|a| *a /= q);
        Ok(acc)
    }

    fn twice_differentiable(&self) -> bool {
        self.models.iter().all(|m| m.twice_differentiable())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMethod {
    /// Solution-derivative system plus a finite-difference contraction of the
    /// second derivatives of `Omega`.
    Analytic,
    /// Central differences of the gradient; used when the derivative system is
    /// singular.
    FiniteDifference,
}

#[derive(Debug, Clone, Serialize)]
pub struct AcquisitionEval {
    pub value: f64,
    /// Over column-major `vec(X)`.
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
    pub hessian_method: Option<HessianMethod>,
    /// Relative asymmetry `||H - H^T|| / ||H||` before symmetrization.
    pub hessian_asymmetry: f64,
    /// The batch actually evaluated, after duplicate separation.
    pub batch: DMatrix<f64>,
    pub jittered: bool,
    pub solution: SdpSolution,
}

/// OEI for a fixed model and domain scale.
pub struct OeiAcquisition<'a, M: MomentModel + ?Sized> {
    model: &'a M,
    diameter: f64,
}

impl<'a, M: MomentModel + ?Sized> OeiAcquisition<'a, M> {
    /// `diameter` is the diameter of the input box, used for the duplicate rule.
    pub fn new(model: &'a M, diameter: f64) -> Self {
        Self { model, diameter }
    }

    pub fn model(&self) -> &M {
        self.model
    }

    /// Value, and optionally gradient and Hessian, at the `k x n` batch `x`.
    pub fn evaluate(
        &self,
        x: &DMatrix<f64>,
        solver: &mut SdpSolver,
        want_gradient: bool,
        want_hessian: bool,
    ) -> Result<AcquisitionEval> {
        if x.ncols() != self.model.dimension() {
            return Err(Error::DimensionMismatch { expected: self.model.dimension(), found: x.ncols() });
        }
        let (batch, jittered) = separate_duplicates(x, self.diameter);
        if jittered {
            log::warn!("perturbed near-duplicate batch points before evaluating OEI");
        }
        let mut out = self.evaluate_exact(&batch, solver, want_gradient || want_hessian, want_hessian)?;
        if !want_gradient {
            out.gradient = None;
        }
        out.jittered = jittered;
        Ok(out)
    }

    fn solve(&self, x: &DMatrix<f64>, solver: &mut SdpSolver) -> Result<SdpSolution> {
        let omega = self.model.moment_matrix(x)?;
        let problem = SdpProblem::new(&omega, self.model.incumbent()?)?;
        let sol = solver.solve(&problem, None)?;
        if !sol.converged {
            return Err(Error::NotConverged { residual: sol.residuals.max() });
        }
        Ok(sol)
    }

    fn evaluate_exact(
        &self,
        x: &DMatrix<f64>,
        solver: &mut SdpSolver,
        want_gradient: bool,
        want_hessian: bool,
    ) -> Result<AcquisitionEval> {
        let solution = self.solve(x, solver)?;
        let mut out = AcquisitionEval {
            value: solution.value,
            gradient: None,
            hessian: None,
            hessian_method: None,
            hessian_asymmetry: 0.0,
            batch: x.clone(),
            jittered: false,
            solution,
        };
        if !want_gradient {
            return Ok(out);
        }
        let jac = self.model.moment_matrix_jacobian(x)?;
        out.gradient = Some(contract(&out.solution.m_bar, &jac));
        if want_hessian {
            if !self.model.twice_differentiable() {
                return Err(Error::KernelNotTwiceDifferentiable);
            }
            let (mut h, method) = match self.analytic_hessian(x, &out.solution, &jac) {
                Ok(h) => (h, HessianMethod::Analytic),
                Err(Error::SingularDerivativeSystem(why)) => {
                    log::debug!("falling back to a finite-difference Hessian: {why}");
                    (self.finite_difference_hessian(x, solver)?, HessianMethod::FiniteDifference)
                }
                Err(e) => return Err(e),
            };
            let norm = h.norm();
            out.hessian_asymmetry = if norm > 0.0 { (&h - h.transpose()).norm() / norm } else { 0.0 };
            symmetrize(&mut h);
            out.hessian = Some(h);
            out.hessian_method = Some(method);
        }
        Ok(out)
    }

    /// `H_ij = <M, d2 Omega / dx_i dx_j> + <dM(dOmega/dx_i), dOmega/dx_j>`.
    fn analytic_hessian(&self, x: &DMatrix<f64>, sol: &SdpSolution, jac: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        let system = DerivativeSystem::new(sol)?;
        let dim = jac.len();
        let mut h = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let dm = system.m_dot(&jac[i])?;
            for j in 0..dim {
                h[(i, j)] = inner(&dm, &jac[j]);
            }
        }
        // Curvature of Omega itself, contracted against the fixed optimizer.
        let (k, n) = (x.nrows(), x.ncols());
        let mut xp = x.clone();
        for j in 0..dim {
            let (a, d) = (j % k, j / k);
            let x0 = x[(a, d)];
            let step = f64::EPSILON.cbrt() * (1.0 + x0.abs());
            xp[(a, d)] = x0 + step;
            let plus = contract(&sol.m_bar, &self.model.moment_matrix_jacobian(&xp)?);
            xp[(a, d)] = x0 - step;
            let minus = contract(&sol.m_bar, &self.model.moment_matrix_jacobian(&xp)?);
            xp[(a, d)] = x0;
            for i in 0..dim {
                h[(i, j)] += (plus[i] - minus[i]) / (2.0 * step);
            }
        }
        debug_assert_eq!(dim, k * n);
        Ok(h)
    }

    fn finite_difference_hessian(&self, x: &DMatrix<f64>, solver: &mut SdpSolver) -> Result<DMatrix<f64>> {
        let dim = x.len();
        let mut h = DMatrix::zeros(dim, dim);
        let mut xp = x.clone();
        for j in 0..dim {
            let x0 = xp[j];
            let step = f64::EPSILON.cbrt() * (1.0 + x0.abs());
            xp[j] = x0 + step;
            let plus = self.gradient_at(&xp, solver)?;
            xp[j] = x0 - step;
            let minus = self.gradient_at(&xp, solver)?;
            xp[j] = x0;
            h.set_column(j, &((plus - minus) / (2.0 * step)));
        }
        Ok(h)
    }

    fn gradient_at(&self, x: &DMatrix<f64>, solver: &mut SdpSolver) -> Result<DVector<f64>> {
        let sol = self.solve(x, solver)?;
        Ok(contract(&sol.m_bar, &self.model.moment_matrix_jacobian(x)?))
    }
}

/// `(<M, J_i>)_i`.
fn contract(m: &DMatrix<f64>, jac: &[DMatrix<f64>]) -> DVector<f64> {
    DVector::from_iterator(jac.len(), jac.iter().map(|j| inner(m, j)))
}

/// Perturbs later rows that sit within `DUPLICATE_DISTANCE * diameter` of an
/// earlier row. Deterministic.
fn separate_duplicates(x: &DMatrix<f64>, diameter: f64) -> (DMatrix<f64>, bool) {
    let threshold = DUPLICATE_DISTANCE * diameter;
    let magnitude = DUPLICATE_JITTER * diameter;
    let mut out = x.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(DUPLICATE_SEED);
    let mut changed = false;
    for _ in 0..8 {
        let mut clean = true;
        for b in 1..out.nrows() {
            for a in 0..b {
                if (out.row(a) - out.row(b)).norm() < threshold {
                    for d in 0..out.ncols() {
                        out[(b, d)] += rng.random_range(-magnitude..=magnitude);
                    }
                    clean = false;
                    changed = true;
                }
            }
        }
        if clean {
            break;
        }
    }
    (out, changed)
}

/// OEI of the averaged moment matrix over hyperparameter samples: one SDP solve.
pub fn evaluate_marginalized(
    x: &DMatrix<f64>,
    samples: &[GpModel],
    diameter: f64,
    solver: &mut SdpSolver,
    want_gradient: bool,
    want_hessian: bool,
) -> Result<AcquisitionEval> {
    let model = MarginalizedModel::new(samples.to_vec())?;
    OeiAcquisition::new(&model, diameter).evaluate(x, solver, want_gradient, want_hessian)
}

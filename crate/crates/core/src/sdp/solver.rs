//! Solver driver: a cold start runs the interior point method (or ADMM), then
//! Newton refinement on the rank-one optimality system takes the residuals to
//! machine precision. Warm starts go straight to the refinement step, which
//! makes nearby solves nearly free.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kkt::ReducedKkt;
use super::{admm, ipm, NormalizedSolution, Residuals, SdpProblem, SdpSolution, WarmStart, ACTIVE_THRESHOLD};
use crate::linalg::{dominant_eigenpair, eigen, inner, max_eigenvalue};
use crate::{Error, Result};

/// The interior point stage stops this far below the requested tolerance,
/// leaving the rest to refinement.
const INTERIOR_TOL_FACTOR: f64 = 1e-4;
const INTERIOR_TOL_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SdpMethod {
    #[default]
    InteriorPoint,
    Admm,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SdpSettings {
    pub method: SdpMethod,
    /// Bound on the max of the three normalized residuals.
    pub tol: f64,
    /// Cap on interior point or ADMM iterations.
    pub max_iterations: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
    /// Newton refinement on the rank-one system.
    pub polish: bool,
    /// ADMM residual level at which refinement is first attempted.
    pub polish_threshold: f64,
    pub max_newton: usize,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            method: SdpMethod::InteriorPoint,
            tol: 1e-7,
            max_iterations: 50_000,
            rho: 1.0,
            relaxation: 1.6,
            polish: true,
            polish_threshold: 1e-3,
            max_newton: 15,
        }
    }
}

/// Solver with remembered warm-start state. One instance per thread.
#[derive(Debug, Clone, Default)]
pub struct SdpSolver {
    settings: SdpSettings,
    last: Option<WarmStart>,
}

impl SdpSolver {
    pub fn new(settings: SdpSettings) -> Self {
        Self { settings, last: None }
    }

    pub fn settings(&self) -> &SdpSettings {
        &self.settings
    }

    pub fn clear_warm_start(&mut self) {
        self.last = None;
    }

    /// Solves `problem`. Without an explicit warm start the previous converged
    /// solution of the same size is used.
    pub fn solve(&mut self, problem: &SdpProblem, warm: Option<&WarmStart>) -> Result<SdpSolution> {
        let s = &self.settings;
        if !(s.tol > 0.0) || !(s.relaxation > 0.0 && s.relaxation < 2.0) || !(s.rho > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid solver settings {s:?}")));
        }
        if let Some(w) = warm {
            if w.k() != problem.k() {
                return Err(Error::DimensionMismatch { expected: problem.k(), found: w.k() });
            }
        }
        let implicit = self.last.as_ref().filter(|w| w.k() == problem.k());
        let sol = run(problem, warm.or(implicit), s);
        if sol.converged {
            self.last = Some(WarmStart::from_solution(&sol));
        }
        Ok(sol)
    }
}

/// One-shot solve with default settings and the given tolerance.
pub fn solve(problem: &SdpProblem, warm: Option<&WarmStart>, tol: f64) -> Result<SdpSolution> {
    SdpSolver::new(SdpSettings { tol, ..SdpSettings::default() }).solve(problem, warm)
}

pub(super) struct Polished {
    pub m: DMatrix<f64>,
    pub atoms: Vec<DVector<f64>>,
    pub iterations: usize,
    pub residuals: Residuals,
}

fn run(problem: &SdpProblem, warm: Option<&WarmStart>, settings: &SdpSettings) -> SdpSolution {
    let frame = problem.frame();
    let omega = problem.omega_normalized();
    let c: Vec<DMatrix<f64>> = frame.constraints().to_vec();
    let tol = settings.tol;
    let mut newton = 0;

    let warm_n = warm.map(|w| {
        let m = frame.m_forward(&w.m);
        let atoms: Vec<_> = w.atoms.iter().map(|y| frame.atom_forward(y)).collect();
        (m, atoms, w.rho)
    });

    if settings.polish {
        if let Some((m0, atoms0, _)) = &warm_n {
            let p = polish(omega, &c, m0.clone(), atoms0.clone(), ACTIVE_THRESHOLD, settings);
            newton += p.iterations;
            if p.residuals.max() <= tol {
                return finish(problem, p.m, p.atoms, p.residuals, Counts { interior: 0, admm: 0, newton }, true, 0.0);
            }
        }
    }

    match settings.method {
        SdpMethod::InteriorPoint => run_interior_point(problem, omega, &c, settings, newton),
        SdpMethod::Admm => admm::run(problem, omega, &c, warm_n, settings, newton),
    }
}

fn run_interior_point(
    problem: &SdpProblem,
    omega: &DMatrix<f64>,
    c: &[DMatrix<f64>],
    settings: &SdpSettings,
    mut newton: usize,
) -> SdpSolution {
    let tol = settings.tol;
    let ip = ipm::solve(omega, c, (tol * INTERIOR_TOL_FACTOR).max(INTERIOR_TOL_FLOOR), settings.max_iterations);
    let atoms: Vec<DVector<f64>> = ip
        .y
        .iter()
        .map(|yi| {
            let (l, v) = dominant_eigenpair(yi);
            v * l.max(0.0).sqrt()
        })
        .collect();
    let defect = rank_one_defect(&ip.y, ACTIVE_THRESHOLD * omega.trace());
    if settings.polish {
        let p = polish(omega, c, ip.m.clone(), atoms.clone(), ACTIVE_THRESHOLD, settings);
        newton += p.iterations;
        if p.residuals.max() <= tol {
            let counts = Counts { interior: ip.iterations, admm: 0, newton };
            return finish(problem, p.m, p.atoms, p.residuals, counts, true, defect);
        }
    }
    let residuals = certify(omega, c, &ip.m, &atoms);
    if residuals.max() <= tol {
        return finish(problem, ip.m, atoms, residuals, Counts { interior: ip.iterations, admm: 0, newton }, true, defect);
    }
    log::warn!(
        "interior point solve did not certify (k = {}, residual {:.3e}); falling back to ADMM",
        problem.k(),
        residuals.max()
    );
    let mut fallback = admm::run(problem, omega, c, None, settings, newton);
    fallback.interior_iterations = ip.iterations;
    fallback.iterations += ip.iterations;
    fallback
}

pub(super) fn extract_atoms(u: &[DMatrix<f64>], rho: f64) -> Vec<DVector<f64>> {
    u.iter()
        .map(|ui| {
            let (l, v) = dominant_eigenpair(&(ui * rho));
            v * l.max(0.0).sqrt()
        })
        .collect()
}

/// Largest `lambda_2 / lambda_1` over the matrices whose `lambda_1` reaches
/// `floor`; the others belong to inactive atoms.
pub(super) fn rank_one_defect(u: &[DMatrix<f64>], floor: f64) -> f64 {
    u.iter()
        .map(|ui| {
            let mut ev: Vec<f64> = eigen(ui).eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            if ev[0] > floor.max(0.0) && ev.len() > 1 {
                ev[1].max(0.0) / ev[0]
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

pub(super) fn certify(omega: &DMatrix<f64>, c: &[DMatrix<f64>], m: &DMatrix<f64>, atoms: &[DVector<f64>]) -> Residuals {
    let n = m.nrows();
    let mut primal: f64 = 0.0;
    let mut ysum = DMatrix::zeros(n, n);
    let mut dobj = 0.0;
    for (ci, y) in c.iter().zip(atoms) {
        primal = primal.max(max_eigenvalue(&(m - ci)));
        ysum.ger(1.0, y, y, 1.0);
        dobj += y.dot(&(ci * y));
    }
    let pobj = inner(omega, m);
    Residuals {
        primal: primal.max(0.0),
        dual: (ysum - omega).norm() / (1.0 + omega.norm()),
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
    }
}

fn active_mask(atoms: &[DVector<f64>], trace: f64) -> Vec<bool> {
    atoms.iter().map(|y| y.norm_squared() >= ACTIVE_THRESHOLD * trace).collect()
}

/// Damped Newton on `(M - C_i) y_i = 0`, `sum_i y_i y_i^T = Omega`.
pub(super) fn polish(
    omega: &DMatrix<f64>,
    c: &[DMatrix<f64>],
    mut m: DMatrix<f64>,
    mut atoms: Vec<DVector<f64>>,
    drop_below: f64,
    settings: &SdpSettings,
) -> Polished {
    let trace = omega.trace();
    let active: Vec<bool> = atoms.iter().map(|y| y.norm_squared() >= drop_below * trace).collect();
    for (y, &a) in atoms.iter_mut().zip(&active) {
        if !a {
            y.fill(0.0);
        }
    }
    let residual = |m: &DMatrix<f64>, atoms: &[DVector<f64>]| {
        let mut g = omega.clone();
        let mut h = Vec::with_capacity(atoms.len());
        let mut phi = 0.0;
        for (ci, y) in c.iter().zip(atoms) {
            g.ger(-1.0, y, y, 1.0);
            let hi = -((m - ci) * y);
            phi += hi.norm_squared();
            h.push(hi);
        }
        phi += g.norm_squared();
        (g, h, phi)
    };
    let floor = (1e-15 * (1.0 + omega.norm())).powi(2);
    let mut iterations = 0;
    let (mut g, mut h, mut phi) = residual(&m, &atoms);
    while iterations < settings.max_newton && phi > floor {
        let Ok(sys) = ReducedKkt::new(&m, c, &atoms, &active, false) else { break };
        let Ok((dm, dy)) = sys.solve(&g, &h) else { break };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let m_t = &m + &dm * t;
            let atoms_t: Vec<_> = atoms.iter().zip(&dy).map(|(y, d)| y + d * t).collect();
            let (g_t, h_t, phi_t) = residual(&m_t, &atoms_t);
            if phi_t < (1.0 - 1e-4 * t) * phi {
                m = m_t;
                atoms = atoms_t;
                (g, h, phi) = (g_t, h_t, phi_t);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    crate::linalg::symmetrize(&mut m);
    let residuals = certify(omega, c, &m, &atoms);
    Polished { m, atoms, iterations, residuals }
}

pub(super) struct Counts {
    pub interior: usize,
    pub admm: usize,
    pub newton: usize,
}

pub(super) fn finish(
    problem: &SdpProblem,
    m: DMatrix<f64>,
    mut atoms: Vec<DVector<f64>>,
    residuals: Residuals,
    counts: Counts,
    converged: bool,
    rank_one_defect: f64,
) -> SdpSolution {
    let k = problem.k();
    let frame = problem.frame().clone();
    let omega_n = problem.omega_normalized();
    for y in atoms.iter_mut() {
        if y[k] < 0.0 {
            *y *= -1.0;
        }
    }
    let dual_n: f64 = atoms.iter().zip(frame.constraints()).map(|(y, ci)| y.dot(&(ci * y))).sum();
    let value = frame.scale * inner(omega_n, &m);
    let dual_value = frame.scale * dual_n;
    let dual_factors: Vec<DVector<f64>> = atoms.iter().map(|y| frame.atom_backward(y)).collect();
    let trace = problem.omega().trace();
    let active = active_mask(&dual_factors, trace);
    SdpSolution {
        m_bar: frame.m_backward(&m),
        value,
        dual_value,
        dual_factors,
        active,
        residuals,
        rank_one_defect,
        iterations: counts.interior + counts.admm + counts.newton,
        interior_iterations: counts.interior,
        admm_iterations: counts.admm,
        newton_iterations: counts.newton,
        converged,
        incumbent: problem.incumbent(),
        omega: problem.omega().clone(),
        normalized: NormalizedSolution { frame, m, atoms },
    }
}

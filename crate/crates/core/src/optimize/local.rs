use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{BoxDomain, Mode, MultistartConfig};

/// Value, gradient and (on request) Hessian at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

pub trait Objective {
    /// Evaluate at `x`; the Hessian is only required when `hessian` is true.
    fn evaluate(&mut self, x: &[f64], hessian: bool) -> Result<Evaluation, String>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64], bool) -> Result<Evaluation, String>,
{
    fn evaluate(&mut self, x: &[f64], hessian: bool) -> Result<Evaluation, String> {
        self(x, hessian)
    }
}

#[derive(Debug, Clone)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub projected_gradient_norm: f64,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the start point.
    pub trace: Vec<f64>,
}

const MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

fn projected_gradient_norm(x: &[f64], g: &[f64], dom: &BoxDomain) -> f64 {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (xi, gi))| ((xi - gi).clamp(dom.lower()[i], dom.upper()[i]) - xi).abs())
        .fold(0.0, f64::max)
}

/// Variables held at a bound because the gradient pushes them outward.
fn active_set(x: &[f64], g: &[f64], dom: &BoxDomain, pg: f64) -> Vec<bool> {
    (0..x.len())
        .map(|i| {
            let eps = pg.min(1e-3 * dom.width(i));
            (x[i] - dom.lower()[i] <= eps && g[i] > 0.0) || (dom.upper()[i] - x[i] <= eps && g[i] < 0.0)
        })
        .collect()
}

fn checked(e: Evaluation, n: usize, need_hessian: bool) -> Result<Evaluation, String> {
    if !e.value.is_finite() || e.gradient.len() != n || e.gradient.iter().any(|g| !g.is_finite()) {
        return Err("objective returned a non-finite value or malformed gradient".into());
    }
    if need_hessian {
        match &e.hessian {
            Some(h) if h.nrows() == n && h.ncols() == n && h.iter().all(|v| v.is_finite()) => {}
            _ => return Err("objective did not return a usable Hessian".into()),
        }
    }
    Ok(e)
}

fn lbfgs_direction(g: &[f64], active: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> {
        v.iter().zip(active).map(|(x, a)| if *a { 0.0 } else { *x }).collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut q = mask(g);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = memory.iter().map(|(s, y)| (mask(s), mask(y))).collect();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let sy = dot(s, y);
        if sy <= 1e-16 {
            alphas.push(0.0);
            continue;
        }
        let a = dot(s, &q) / sy;
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y)) = pairs.last() {
        let yy = dot(y, y);
        let sy = dot(s, y);
        if yy > 0.0 && sy > 0.0 {
            let gamma = sy / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for ((s, y), a) in pairs.iter().zip(alphas.iter().rev()) {
        let sy = dot(s, y);
        if sy <= 1e-16 {
            continue;
        }
        let b = dot(y, &q) / sy;
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter().map(|v| -v).collect()
}

/// Newton step on the free variables, with `tau I` added to the Hessian until
/// it is positive definite. Also reports whether a shift was needed.
fn newton_direction(g: &[f64], h: &DMatrix<f64>, active: &[bool]) -> (Vec<f64>, bool) {
    let free: Vec<usize> = (0..g.len()).filter(|&i| !active[i]).collect();
    let mut d = vec![0.0; g.len()];
    if free.is_empty() {
        return (d, false);
    }
    let m = free.len();
    let hf = DMatrix::from_fn(m, m, |a, b| 0.5 * (h[(free[a], free[b])] + h[(free[b], free[a])]));
    let gf = DVector::from_iterator(m, free.iter().map(|&i| g[i]));
    let scale = hf.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
    let mut tau = 0.0;
    loop {
        let mut shifted = hf.clone();
        for i in 0..m {
            shifted[(i, i)] += tau;
        }
        if let Some(ch) = Cholesky::new(shifted) {
            let step = ch.solve(&gf);
            for (a, &i) in free.iter().enumerate() {
                d[i] = -step[a];
            }
            return (d, tau > 0.0);
        }
        tau = if tau == 0.0 { 1e-3 * scale } else { tau * 10.0 };
        if tau > 1e12 * scale {
            for &i in &free {
                d[i] = -g[i];
            }
            return (d, true);
        }
    }
}

/// One local run from `start` (projected onto the box first).
pub fn minimize_local<O: Objective + ?Sized>(
    objective: &mut O,
    start: &[f64],
    domain: &BoxDomain,
    config: &MultistartConfig,
) -> Result<LocalResult, String> {
    let n = domain.dimension();
    if start.len() != n {
        return Err(format!("start has dimension {}, domain {}", start.len(), n));
    }
    let newton = config.mode == Mode::NewtonWithHessian;
    let mut x = start.to_vec();
    domain.project(&mut x);
    let mut evaluations = 1;
    let mut cur = checked(objective.evaluate(&x, newton)?, n, newton)?;
    let mut trace = vec![cur.value];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    let mut iterations = 0;
    let mut pg = projected_gradient_norm(&x, &cur.gradient, domain);
    let min_width = (0..n).map(|i| domain.width(i)).fold(f64::INFINITY, f64::min);

    // Set after a failed line search along the Newton direction.
    let mut force_steepest = false;
    while pg > config.gradient_tolerance && iterations < config.max_iterations {
        let active = active_set(&x, &cur.gradient, domain, pg);
        let mut steepest = false;
        let mut shifted = false;
        let mut d = if force_steepest {
            steepest = true;
            cur.gradient.iter().zip(&active).map(|(g, a)| if *a { 0.0 } else { -g }).collect()
        } else if newton {
            let (d, s) = newton_direction(&cur.gradient, cur.hessian.as_ref().expect("checked"), &active);
            shifted = s;
            d
        } else if memory.is_empty() {
            steepest = true;
            lbfgs_direction(&cur.gradient, &active, &memory)
        } else {
            lbfgs_direction(&cur.gradient, &active, &memory)
        };
        let mut slope: f64 = d.iter().zip(&cur.gradient).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            memory.clear();
            steepest = true;
            d = cur.gradient.iter().zip(&active).map(|(g, a)| if *a { 0.0 } else { -g }).collect();
            slope = d.iter().zip(&cur.gradient).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                break;
            }
        }
        let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let box_step = 0.25 * min_width / dmax;
        let mut t = if steepest {
            box_step.min(1.0)
        } else if shifted {
            // Away from a convex region the shifted step is short; start at
            // least as long as a steepest-descent step would.
            box_step.max(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for attempt in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            domain.project(&mut trial);
            let decrease: f64 = trial.iter().zip(&x).zip(&cur.gradient).map(|((a, b), g)| (a - b) * g).sum();
            if trial == x {
                break;
            }
            let want_h = newton && attempt == 0;
            evaluations += 1;
            match objective.evaluate(&trial, want_h).and_then(|e| checked(e, n, want_h)) {
                Ok(e) if e.value <= cur.value + ARMIJO * decrease.min(0.0) => {
                    accepted = Some((trial, e));
                    break;
                }
                // Failed or insufficient decrease: backtrack.
                _ => t *= 0.5,
            }
        }

        let Some((xn, mut en)) = accepted else {
            if !memory.is_empty() && !newton {
                memory.clear();
                continue;
            }
            if newton && !steepest {
                force_steepest = true;
                continue;
            }
            break;
        };
        force_steepest = false;
        if newton && en.hessian.is_none() {
            evaluations += 1;
            en = checked(objective.evaluate(&xn, true)?, n, true)?;
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = en.gradient.iter().zip(&cur.gradient).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sn: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let yn: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-10 * sn * yn {
            memory.push_back((s, y));
            if memory.len() > MEMORY {
                memory.pop_front();
            }
        }
        x = xn;
        cur = en;
        iterations += 1;
        trace.push(cur.value);
        pg = projected_gradient_norm(&x, &cur.gradient, domain);
    }

    Ok(LocalResult {
        x,
        value: cur.value,
        iterations,
        evaluations,
        projected_gradient_norm: pg,
        converged: pg <= config.gradient_tolerance,
        trace,
    })
}

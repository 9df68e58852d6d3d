use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baselines::{batch_lcb, batch_matrix, constant_liar_batch, lcb_beta, random_batch, Lie};
use super::benchmarks::BenchmarkFunction;
use crate::gp::{fit_hyperparameters, Dataset, GpModel, HyperBounds, KernelFamily, MeanFunction};
use crate::oei::OeiAcquisition;
use crate::optimize::{self, BoxDomain, Evaluation, Mode, MultistartConfig};
use crate::sdp::{SdpSettings, SdpSolver};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acquisition {
    Oei,
    Random,
    ConstantLiarEi,
    BatchLcb,
}

impl Acquisition {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "oei" => Some(Self::Oei),
            "random" => Some(Self::Random),
            "constant-liar-ei" | "constant-liar" | "cl" => Some(Self::ConstantLiarEi),
            "batch-lcb" | "blcb" => Some(Self::BatchLcb),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Oei => "oei",
            Self::Random => "random",
            Self::ConstantLiarEi => "constant-liar-ei",
            Self::BatchLcb => "batch-lcb",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub initial_points: usize,
    pub acquisition: Acquisition,
    pub kernel: KernelFamily,
    pub seed: u64,
    /// Observation noise variance of the GP on the normalized values.
    pub noise: f64,
    pub hyper_restarts: usize,
    pub acquisition_restarts: usize,
    pub optimizer_mode: Mode,
    pub optimizer_iterations: usize,
    pub lie: Lie,
    /// Failure probability in the batch LCB confidence schedule.
    pub lcb_delta: f64,
    pub sdp: SdpSettings,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            batch_size: 5,
            iterations: 10,
            initial_points: 10,
            acquisition: Acquisition::Oei,
            kernel: KernelFamily::SquaredExponential,
            seed: 0,
            noise: 1e-6,
            hyper_restarts: 20,
            acquisition_restarts: 20,
            optimizer_mode: Mode::QuasiNewton,
            optimizer_iterations: 200,
            lie: Lie::Mix,
            lcb_delta: 0.1,
            sdp: SdpSettings::default(),
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if self.initial_points == 0 {
            return bad("initial_points must be >= 1");
        }
        if self.hyper_restarts == 0 || self.acquisition_restarts == 0 {
            return bad("restart counts must be >= 1");
        }
        if !(self.noise >= 0.0) {
            return bad("noise must be >= 0");
        }
        if !(self.lcb_delta > 0.0 && self.lcb_delta < 1.0) {
            return bad("lcb_delta must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IterationRow {
    pub iteration: usize,
    pub evaluations: usize,
    /// Best observed value, original units.
    pub incumbent: f64,
    pub regret: Option<f64>,
    pub wall_time_s: f64,
    /// SDP iterations spent selecting this batch (zero for other acquisitions).
    pub solver_iterations: usize,
    /// Population variance of the normalized values the model was fit on.
    pub normalized_variance: f64,
    /// Largest `|z|` over the rescaled inputs the model was fit on.
    pub max_abs_input: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub function: String,
    pub config: BoConfig,
    pub rows: Vec<IterationRow>,
    /// Set when the run stopped early; `rows` holds the completed iterations.
    pub aborted: Option<String>,
}

/// Independent seed for stream `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const STREAM_DESIGN: u64 = 1;
const STREAM_HYPER: u64 = 2;
const STREAM_ACQ: u64 = 3;

/// Runs batch BO on `objective`. Inputs are rescaled to `[-0.5, 0.5]^n` and
/// values standardized to unit population variance before every model fit.
/// A non-finite objective value or a failed model fit or batch selection
/// stops the run with a partial record.
pub fn run(objective: &BenchmarkFunction, config: &BoConfig) -> Result<ExperimentRecord> {
    config.validate()?;
    let domain = &objective.domain;
    let n = objective.dimension();
    let unit = BoxDomain::centered_unit(n);
    let mut record = ExperimentRecord {
        function: objective.name.clone(),
        config: config.clone(),
        rows: Vec::with_capacity(config.iterations),
        aborted: None,
    };

    let mut inputs: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let observe = |z: &[f64], inputs: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| -> std::result::Result<(), String> {
        let x = domain.from_centered_unit(z);
        let y = objective.evaluate(&x);
        if !y.is_finite() {
            return Err(format!("objective returned {y} at {x:?}"));
        }
        inputs.push(z.to_vec());
        values.push(y);
        Ok(())
    };

    let design = random_batch(&unit, config.initial_points, derive_seed(config.seed, STREAM_DESIGN));
    for row in design.row_iter() {
        let z: Vec<f64> = row.iter().copied().collect();
        if let Err(e) = observe(&z, &mut inputs, &mut values) {
            record.aborted = Some(e);
            return Ok(record);
        }
    }

    for t in 1..=config.iterations {
        let start = Instant::now();
        let acq_seed = derive_seed(config.seed, STREAM_ACQ + 16 * t as u64);
        let step = fit_model(&inputs, &values, config, t).and_then(|(model, var, max_abs)| {
            select_batch(&model, &unit, config, t, acq_seed).map(|(batch, its)| (batch, its, var, max_abs))
        });
        let (batch, solver_iterations, normalized_variance, max_abs_input) = match step {
            Ok(s) => s,
            Err(e) => {
                record.aborted = Some(format!("iteration {t}: {e}"));
                return Ok(record);
            }
        };
        for row in batch.row_iter() {
            let z: Vec<f64> = row.iter().copied().collect();
            if let Err(e) = observe(&z, &mut inputs, &mut values) {
                record.aborted = Some(e);
                return Ok(record);
            }
        }
        let incumbent = values.iter().copied().fold(f64::INFINITY, f64::min);
        record.rows.push(IterationRow {
            iteration: t,
            evaluations: values.len(),
            incumbent,
            regret: objective.known_minimum.map(|m| incumbent - m),
            wall_time_s: start.elapsed().as_secs_f64(),
            solver_iterations,
            normalized_variance,
            max_abs_input,
        });
    }
    Ok(record)
}

fn fit_model(inputs: &[Vec<f64>], values: &[f64], config: &BoConfig, t: usize) -> Result<(GpModel, f64, f64)> {
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    let normalized: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    let nm = normalized.iter().sum::<f64>() / count;
    let normalized_variance = normalized.iter().map(|v| (v - nm).powi(2)).sum::<f64>() / count;
    let max_abs_input = inputs.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));

    let data = Dataset::new(batch_matrix(inputs), normalized)?;
    let kernel = fit_hyperparameters(
        &data,
        config.kernel,
        &MeanFunction::Zero,
        config.noise,
        &HyperBounds::default(),
        config.hyper_restarts,
        derive_seed(config.seed, STREAM_HYPER + 16 * t as u64),
    )?;
    let model = GpModel::new(data, kernel, MeanFunction::Zero, config.noise)?;
    Ok((model, normalized_variance, max_abs_input))
}

fn select_batch(
    model: &GpModel,
    unit: &BoxDomain,
    config: &BoConfig,
    t: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, usize)> {
    let k = config.batch_size;
    let ms = MultistartConfig {
        restarts: config.acquisition_restarts,
        max_iterations: config.optimizer_iterations,
        mode: config.optimizer_mode,
        seed,
        ..MultistartConfig::default()
    };
    match config.acquisition {
        Acquisition::Random => Ok((random_batch(unit, k, seed), 0)),
        Acquisition::ConstantLiarEi => Ok((constant_liar_batch(model, unit, k, config.lie, &ms)?, 0)),
        Acquisition::BatchLcb => {
            let beta = lcb_beta(t, unit.dimension(), config.lcb_delta);
            Ok((batch_lcb(model, unit, k, beta, &ms)?, 0))
        }
        Acquisition::Oei => {
            let (x, iterations) = minimize_oei(model, unit, k, &ms, &config.sdp)?;
            Ok((x, iterations))
        }
    }
}

/// Multistart minimization of OEI over `k x n` batches in `domain`. Returns the
/// best batch and the total SDP iterations spent.
pub fn minimize_oei(
    model: &GpModel,
    domain: &BoxDomain,
    k: usize,
    config: &MultistartConfig,
    sdp: &SdpSettings,
) -> Result<(DMatrix<f64>, usize)> {
    let n = domain.dimension();
    let acq = OeiAcquisition::new(model, domain.diameter());
    let batch_domain = domain.batch(k);
    let spent = AtomicUsize::new(0);
    let objective = |_| {
        let mut solver = SdpSolver::new(*sdp);
        let (acq, spent) = (&acq, &spent);
        move |x: &[f64], hessian: bool| -> std::result::Result<Evaluation, String> {
            let xm = DMatrix::from_column_slice(k, n, x);
            let e = acq.evaluate(&xm, &mut solver, true, hessian).map_err(|e| e.to_string())?;
            spent.fetch_add(e.solution.iterations, Ordering::Relaxed);
            Ok(Evaluation {
                value: e.value,
                gradient: e.gradient.map(|g| g.iter().copied().collect()).unwrap_or_default(),
                hessian: e.hessian,
            })
        }
    };
    let best = optimize::minimize(objective, &batch_domain, config)?;
    Ok((DMatrix::from_column_slice(k, n, &best.x), spent.into_inner()))
}

//! Batch Bayesian optimization: the outer loop, baseline batch selectors,
//! benchmark objectives and Monte-Carlo reference values.

mod baselines;
mod benchmarks;
mod oracles;
mod run;

pub use baselines::{batch_lcb, constant_liar_batch, lcb_beta, random_batch, Lie};
pub use benchmarks::{
    benchmark, cosine_mixture, demo_kernel, demo_mean, demo_posterior, eggholder, gp_draw, hartmann6, six_hump_camel,
    BenchmarkFunction, BENCHMARK_NAMES, DEMO_NOISE,
};
pub use oracles::{
    mc_expected_improvement, oei_k1_closed_form, one_point_ei, score_batches, McEstimate, DEFAULT_MC_SAMPLES,
};
pub use run::{derive_seed, minimize_oei, run, Acquisition, BoConfig, ExperimentRecord, IterationRow};

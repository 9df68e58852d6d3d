//! Gaussian-process regression with analytic derivatives in the test inputs.

mod kernel;
mod likelihood;
mod mean;
mod model;

pub use kernel::{DerivativeOrder, Kernel, KernelEval, KernelFamily};
pub use likelihood::{fit_hyperparameters, log_marginal_likelihood, HyperBounds, LogLikelihood};
pub use mean::MeanFunction;
pub use model::{
    marginalized_moment_matrix, moment_matrix, posterior, Dataset, GpModel, MomentMatrix,
    PointPrediction, PosteriorMoments, JITTER_MAX, JITTER_RELATIVE,
};

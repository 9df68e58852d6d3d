//! The OEI acquisition: value, gradient and Hessian of the SDP value
//! `p(Omega(X))` with respect to the batch `X`, plus the worst-case discrete
//! distribution read off the dual factors.

mod acquisition;
mod derivative;
mod distribution;

pub use acquisition::{
    evaluate_marginalized, AcquisitionEval, HessianMethod, MarginalizedModel, MomentModel, OeiAcquisition,
    DUPLICATE_DISTANCE, DUPLICATE_JITTER,
};
pub use derivative::{solution_derivative, DerivativeSystem, SolutionDerivative};
pub use distribution::{improvement, worst_case_distribution, WorstCaseDistribution};

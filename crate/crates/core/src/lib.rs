//! Batch Bayesian optimization driven by the Optimistic Expected Improvement
//! (OEI) acquisition.
//!
//! OEI replaces the Gaussian expectation of multipoint expected improvement
//! with its infimum over every distribution sharing the posterior's first two
//! moments. That infimum is the value of a small semidefinite program whose
//! cost matrix is the bordered second-moment matrix of the GP posterior, and
//! whose optimizer is the gradient of the value with respect to that matrix.
//!
//! Modules, bottom-up:
//! * [`gp`]: kernels, mean functions, the batch posterior, moment matrices and
//!   their Jacobians, marginal likelihood.
//! * [`sdp`]: the structured SDP, interior-point and ADMM solvers with Newton
//!   refinement, KKT certificates and warm starts.
//! * [`oei`]: the acquisition value, gradient and Hessian, the derivative of the
//!   SDP solution, and the worst-case discrete distribution.
//! * [`optimize`]: box-constrained multistart local minimization.
//! * [`bo`]: benchmark functions, baselines, Monte-Carlo oracles and the batch
//!   BO loop.
//! * [`validation`]: randomized property suites shared by the CLI.

// Argument checks use negated comparisons so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bo;
mod error;
pub mod gp;
pub mod linalg;
pub mod oei;
pub mod optimize;
pub mod sdp;
pub mod validation;

pub use error::{Error, Result};

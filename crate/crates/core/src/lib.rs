//! Cubic-regularized policy Newton optimization for finite-horizon tabular MDPs.
//!
//! The crate is organized around a small set of subsystems:
//!
//! - [`mdp`]: finite-horizon tabular MDPs, trajectories, discounted costs and
//!   cost-to-go, plus exhaustive trajectory enumeration for exact checks.
//! - [`policy`]: differentiable parameterized policies (tabular softmax) with
//!   analytic score gradients/Hessians and certified norm bounds.
//! - [`sampler`]: seeded Monte Carlo trajectory simulation with a
//!   deterministic-parallel substream contract.
//! - [`estimator`]: likelihood-ratio gradient/Hessian estimators and
//!   matrix-free Hessian-vector products.
//! - [`cubic`]: exact (eigendecomposition + secular equation) and approximate
//!   (Cauchy step / perturbed gradient descent) solvers for the
//!   cubic-regularized Newton subproblem.
//! - [`constants`]: smoothness constants and batch/step schedules.
//! - [`driver`]: the CR-PN, ACR-PN and REINFORCE optimization loops.
//! - [`oracle`]: exact enumeration-based ground truth (value, gradient,
//!   Hessian), finite-difference cross checks, and stationarity certificates.

pub mod constants;
pub mod cubic;
pub mod diag;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod fixtures;
pub mod linalg;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod reduce;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};

//! Likelihood-ratio estimators of the objective's gradient and Hessian.
//!
//! For a trajectory `tau`, with cost-to-go `Psi_i(tau)` and score-weighted
//! surrogate `Phi(theta; tau) = sum_i Psi_i(tau) log pi(a_i|s_i; theta)`:
//!
//! - the gradient estimate is `g(theta; tau) = grad Phi`,
//! - the Hessian estimate is the symmetrized
//!   `H(theta; tau) = sym(grad Phi * grad^T log p + hess Phi)`.
//!
//! Symmetrization preserves unbiasedness (the population Hessian is
//! symmetric) and makes the smallest eigenvalue well-defined. Batched
//! versions average over trajectories with a deterministic chunked reduction
//! so results are bit-stable across thread counts.

use crate::diag;
use crate::error::{Error, Result};
use crate::mdp::{psi_all, FiniteMdp, Trajectory};
use crate::policy::{Policy, PolicyParams};
use crate::reduce::{deterministic_sum, DEFAULT_CHUNK};
use crate::sampler::SampleBatch;
use nalgebra::{DMatrix, DVector};

/// Batched gradient estimate `(1/m) sum g(theta; tau)`.
#[derive(Debug, Clone)]
pub struct GradEstimate {
    pub mean: DVector<f64>,
    pub batch_size: usize,
    pub theta_snapshot: PolicyParams,
}

/// Batched symmetric Hessian estimate `(1/b) sum H(theta; tau)`.
#[derive(Debug, Clone)]
pub struct HessEstimate {
    pub mean: DMatrix<f64>,
    pub batch_size: usize,
    pub theta_snapshot: PolicyParams,
}

/// `grad Phi(theta; tau) = sum_i Psi_i(tau) grad log pi(a_i|s_i; theta)`.
pub fn phi_grad<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    tau: &Trajectory,
) -> DVector<f64> {
    let mut acc = DVector::zeros(policy.dim());
    add_phi_grad(mdp, policy, theta, tau, &mut acc);
    acc
}

fn add_phi_grad<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    tau: &Trajectory,
    acc: &mut DVector<f64>,
) {
    let psis = psi_all(mdp, tau);
    for (i, &w) in psis.iter().enumerate() {
        policy.add_scaled_grad_log_prob(theta, tau.states[i], tau.actions[i], w, acc);
    }
}

/// Sum of scores along the trajectory: `grad log p(tau; theta)`.
fn score_sum<P: Policy>(policy: &P, theta: &PolicyParams, tau: &Trajectory) -> DVector<f64> {
    let mut acc = DVector::zeros(policy.dim());
    for h in 0..tau.horizon() {
        policy.add_scaled_grad_log_prob(theta, tau.states[h], tau.actions[h], 1.0, &mut acc);
    }
    acc
}

/// Single-trajectory Hessian estimate, symmetrized:
/// `sym(grad Phi * grad^T log p) + hess Phi`.
pub fn single_traj_hessian<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    tau: &Trajectory,
) -> DMatrix<f64> {
    diag::note_dense_alloc();
    let mut acc = DMatrix::zeros(policy.dim(), policy.dim());
    add_single_traj_hessian(mdp, policy, theta, tau, &mut acc);
    acc
}

fn add_single_traj_hessian<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    tau: &Trajectory,
    acc: &mut DMatrix<f64>,
) {
    let grad_phi = phi_grad(mdp, policy, theta, tau);
    let score = score_sum(policy, theta, tau);
    // sym(grad_phi score^T) = (grad_phi score^T + score grad_phi^T) / 2
    acc.ger(0.5, &grad_phi, &score, 1.0);
    acc.ger(0.5, &score, &grad_phi, 1.0);
    let psis = psi_all(mdp, tau);
    for (i, &w) in psis.iter().enumerate() {
        policy.add_scaled_hess_log_prob(theta, tau.states[i], tau.actions[i], w, acc);
    }
}

/// Symmetrized single-trajectory Hessian-vector product, accumulated into
/// `acc` in O(H d) without materializing any d x d matrix.
fn add_single_traj_hvp<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    tau: &Trajectory,
    v: &DVector<f64>,
    acc: &mut DVector<f64>,
) {
    let grad_phi = phi_grad(mdp, policy, theta, tau);
    let score = score_sum(policy, theta, tau);
    let score_dot_v = score.dot(v);
    let grad_dot_v = grad_phi.dot(v);
    acc.axpy(0.5 * score_dot_v, &grad_phi, 1.0);
    acc.axpy(0.5 * grad_dot_v, &score, 1.0);
    let psis = psi_all(mdp, tau);
    for (i, &w) in psis.iter().enumerate() {
        policy.add_scaled_hess_log_prob_vp(theta, tau.states[i], tau.actions[i], w, v, acc);
    }
}

fn check_count(m: usize, available: usize) -> Result<()> {
    if m == 0 || m > available {
        return Err(Error::InvalidCount(format!(
            "requested {m} of {available} trajectories"
        )));
    }
    Ok(())
}

/// Mean of `phi_grad` over the first `m` trajectories of the batch.
pub fn batch_gradient<P: Policy + Sync>(
    mdp: &FiniteMdp,
    policy: &P,
    batch: &SampleBatch,
    m: usize,
) -> Result<GradEstimate> {
    check_count(m, batch.len())?;
    let theta = &batch.theta_snapshot;
    let dim = policy.dim();
    let sum = deterministic_sum(
        m,
        DEFAULT_CHUNK,
        || DVector::zeros(dim),
        |i, acc: &mut DVector<f64>| add_phi_grad(mdp, policy, theta, &batch.trajectories[i], acc),
        |a, b| a + b,
    );
    Ok(GradEstimate {
        mean: sum / m as f64,
        batch_size: m,
        theta_snapshot: theta.clone(),
    })
}

/// Mean of [`single_traj_hessian`] over the first `b` trajectories.
pub fn batch_hessian<P: Policy + Sync>(
    mdp: &FiniteMdp,
    policy: &P,
    batch: &SampleBatch,
    b: usize,
) -> Result<HessEstimate> {
    check_count(b, batch.len())?;
    diag::note_dense_alloc();
    let theta = &batch.theta_snapshot;
    let dim = policy.dim();
    let sum = deterministic_sum(
        b,
        DEFAULT_CHUNK,
        || DMatrix::zeros(dim, dim),
        |i, acc: &mut DMatrix<f64>| {
            add_single_traj_hessian(mdp, policy, theta, &batch.trajectories[i], acc)
        },
        |a, b| a + b,
    );
    Ok(HessEstimate {
        mean: sum / b as f64,
        batch_size: b,
        theta_snapshot: theta.clone(),
    })
}

/// Batched Hessian-vector product `(1/b) sum_tau sym(H(theta; tau)) v`,
/// identical to `batch_hessian(..).mean * v` but computed in O(b H d) with no
/// d x d storage.
pub fn batch_hvp<P: Policy + Sync>(
    mdp: &FiniteMdp,
    policy: &P,
    batch: &SampleBatch,
    b: usize,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_count(b, batch.len())?;
    let dim = policy.dim();
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    let theta = &batch.theta_snapshot;
    let sum = deterministic_sum(
        b,
        DEFAULT_CHUNK,
        || DVector::zeros(dim),
        |i, acc: &mut DVector<f64>| {
            add_single_traj_hvp(mdp, policy, theta, &batch.trajectories[i], v, acc)
        },
        |a, b| a + b,
    );
    Ok(sum / b as f64)
}

/// Retained batch enabling repeated `v -> H_bar v` evaluation without dense
/// Hessian storage.
pub struct HvpHandle<'a, P: Policy + Sync> {
    mdp: &'a FiniteMdp,
    policy: &'a P,
    batch: &'a SampleBatch,
    b: usize,
}

impl<'a, P: Policy + Sync> HvpHandle<'a, P> {
    pub fn new(mdp: &'a FiniteMdp, policy: &'a P, batch: &'a SampleBatch, b: usize) -> Result<Self> {
        check_count(b, batch.len())?;
        Ok(Self {
            mdp,
            policy,
            batch,
            b,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.b
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        batch_hvp(self.mdp, self.policy, self.batch, self.b, v)
            .expect("dimensions validated at construction")
    }
}

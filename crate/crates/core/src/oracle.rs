//! Exact ground truth by trajectory enumeration.
//!
//! On enumerable fixtures the expected cost, its gradient and its Hessian
//! are computed as explicit probability-weighted sums over all structurally
//! supported trajectories, with the derivative terms assembled analytically
//! through the policy. Finite-difference variants provide an independent
//! cross-check of the analytic path.

use crate::error::{Error, Result};
use crate::estimator;
use crate::linalg;
use crate::mdp::{discounted_cost, enumerate_trajectories, FiniteMdp};
use crate::policy::{Policy, PolicyParams};
use nalgebra::{DMatrix, DVector};

/// Exact value, gradient and Hessian of the expected discounted cost.
#[derive(Debug, Clone)]
pub struct ExactDerivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub trajectory_count: usize,
}

/// Policy probability of a trajectory (the dynamics weight is supplied by
/// the enumerator).
fn policy_weight<P: Policy>(
    policy: &P,
    theta: &PolicyParams,
    tau: &crate::mdp::Trajectory,
) -> f64 {
    let mut log_p = 0.0;
    for h in 0..tau.horizon() {
        log_p += policy.log_prob(theta, tau.states[h], tau.actions[h]);
    }
    log_p.exp()
}

/// `J(theta) = sum_tau p(tau; theta) G(tau)` over the enumerable trajectory
/// space. Cheaper than [`exact_derivatives`] when only the value is needed.
pub fn exact_value<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    cap: Option<u128>,
) -> Result<f64> {
    policy.check_theta(theta)?;
    let mut value = 0.0;
    for (tau, dyn_w) in enumerate_trajectories(mdp, cap)? {
        let p = dyn_w * policy_weight(policy, theta, &tau);
        if p > 0.0 {
            value += p * discounted_cost(mdp, &tau);
        }
    }
    Ok(value)
}

/// Exact `J`, `grad J`, `hess J` via enumeration:
/// `grad J = sum p grad Phi`, `hess J = sum p sym(grad Phi grad^T log p + hess Phi)`.
pub fn exact_derivatives<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    cap: Option<u128>,
) -> Result<ExactDerivatives> {
    policy.check_theta(theta)?;
    let dim = policy.dim();
    let mut value = 0.0;
    let mut gradient = DVector::zeros(dim);
    let mut hessian = DMatrix::zeros(dim, dim);
    let mut count = 0usize;
    for (tau, dyn_w) in enumerate_trajectories(mdp, cap)? {
        count += 1;
        let p = dyn_w * policy_weight(policy, theta, &tau);
        if p == 0.0 {
            continue;
        }
        value += p * discounted_cost(mdp, &tau);
        gradient += p * estimator::phi_grad(mdp, policy, theta, &tau);
        hessian += p * estimator::single_traj_hessian(mdp, policy, theta, &tau);
    }
    Ok(ExactDerivatives {
        value,
        gradient,
        hessian,
        trajectory_count: count,
    })
}

/// Central finite differences of the exact value.
pub fn finite_diff_grad<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    step: f64,
    cap: Option<u128>,
) -> Result<DVector<f64>> {
    if step <= 0.0 {
        return Err(Error::InvalidInput("step must be positive".into()));
    }
    let dim = policy.dim();
    let mut g = DVector::zeros(dim);
    for i in 0..dim {
        let mut plus = theta.clone();
        plus.theta[i] += step;
        let mut minus = theta.clone();
        minus.theta[i] -= step;
        g[i] = (exact_value(mdp, policy, &plus, cap)? - exact_value(mdp, policy, &minus, cap)?)
            / (2.0 * step);
    }
    Ok(g)
}

/// Central finite differences of the exact gradient, symmetrized.
pub fn finite_diff_hess<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    step: f64,
    cap: Option<u128>,
) -> Result<DMatrix<f64>> {
    if step <= 0.0 {
        return Err(Error::InvalidInput("step must be positive".into()));
    }
    let dim = policy.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut plus = theta.clone();
        plus.theta[j] += step;
        let mut minus = theta.clone();
        minus.theta[j] -= step;
        let col = (exact_derivatives(mdp, policy, &plus, cap)?.gradient
            - exact_derivatives(mdp, policy, &minus, cap)?.gradient)
            / (2.0 * step);
        h.set_column(j, &col);
    }
    Ok((h.clone() + h.transpose()) * 0.5)
}

/// Smallest eigenvalue and unit eigenvector of a symmetric matrix.
pub fn min_eigenvalue(matrix: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let (lambda, v) = linalg::min_eigenpair_symmetric(matrix, 1e-8)?;
    let residual = (matrix * &v - lambda * &v).norm();
    if residual > 1e-8 {
        return Err(Error::NumericalFailure(format!(
            "eigenpair residual {residual:.3e}"
        )));
    }
    Ok((lambda, v))
}

/// Certificate for an approximate second-order stationary point.
#[derive(Debug, Clone)]
pub struct SospCertificate {
    pub epsilon: f64,
    pub rho: f64,
    pub grad_norm: f64,
    pub min_eigenvalue: f64,
    /// `epsilon - ||grad J||`; nonnegative when the first-order test passes.
    pub grad_margin: f64,
    /// `lambda_min + sqrt(rho epsilon)`; nonnegative when the curvature test
    /// passes.
    pub curvature_margin: f64,
    pub pass: bool,
}

/// Tests `||grad J(theta)|| <= eps` and `lambda_min(hess J) >= -sqrt(rho eps)`
/// with enumeration-exact derivatives.
pub fn is_eps_sosp<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    epsilon: f64,
    rho: f64,
    cap: Option<u128>,
) -> Result<SospCertificate> {
    if epsilon <= 0.0 || rho <= 0.0 {
        return Err(Error::InvalidInput(
            "epsilon and rho must be positive".into(),
        ));
    }
    let exact = exact_derivatives(mdp, policy, theta, cap)?;
    let grad_norm = exact.gradient.norm();
    let (lambda_min, _) = min_eigenvalue(&exact.hessian)?;
    let grad_margin = epsilon - grad_norm;
    let curvature_margin = lambda_min + (rho * epsilon).sqrt();
    Ok(SospCertificate {
        epsilon,
        rho,
        grad_norm,
        min_eigenvalue: lambda_min,
        grad_margin,
        curvature_margin,
        pass: grad_margin >= 0.0 && curvature_margin >= 0.0,
    })
}

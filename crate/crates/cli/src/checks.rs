//! The estimator/oracle cross-check suite behind the `check` subcommand.
//!
//! Every check prints its margin (positive = slack remaining). The first
//! failing check names itself in the error.

use nalgebra::DVector;
use policy_newton::constants::compute_constants;
use policy_newton::error::{Error, Result};
use policy_newton::estimator::{phi_grad, single_traj_hessian};
use policy_newton::linalg::operator_norm_symmetric;
use policy_newton::mdp::{enumerate_trajectories, trajectory_log_prob, validate_mdp, FiniteMdp};
use policy_newton::oracle::{exact_derivatives, finite_diff_grad, finite_diff_hess};
use policy_newton::policy::{certify_bounds, Policy, PolicyParams, TabularSoftmaxPolicy};
use policy_newton::rng::Stream;
use policy_newton::sampler::sample_batch;

pub struct CheckOutcome {
    pub name: &'static str,
    pub margin: f64,
    pub pass: bool,
}

fn random_theta(dim: usize, stream: &mut Stream) -> PolicyParams {
    PolicyParams::from_vector(DVector::from_iterator(
        dim,
        (0..dim).map(|_| stream.uniform_in(-3.0, 3.0)),
    ))
}

/// Runs the full suite; returns all outcomes (caller renders them) and an
/// error naming the first failing check.
pub fn run_checks(
    mdp: &FiniteMdp,
    policy: &TabularSoftmaxPolicy,
    seed: u64,
) -> Result<Vec<CheckOutcome>> {
    let mut outcomes = Vec::new();
    let mut stream = Stream::substream(seed, 0);
    let dim = policy.dim();

    let report = validate_mdp(mdp);
    outcomes.push(CheckOutcome {
        name: "validate_mdp",
        margin: if report.pass() { 0.0 } else { -1.0 },
        pass: report.pass(),
    });
    if !report.pass() {
        return Err(Error::InvalidMdp(
            report.first_failure().unwrap().detail.clone(),
        ));
    }

    let bounds = certify_bounds(policy, 500, seed)?;
    let worst = bounds
        .margins()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    outcomes.push(CheckOutcome {
        name: "certify_bounds",
        margin: worst,
        pass: bounds.pass,
    });
    if !bounds.pass {
        return Err(Error::NumericalFailure(format!(
            "certify_bounds: declared policy bounds violated (worst margin {worst:.3e})"
        )));
    }

    // Probability normalization over the enumerated trajectory space.
    let theta = random_theta(dim, &mut stream);
    let total: f64 = enumerate_trajectories(mdp, None)?
        .map(|(tau, _)| {
            trajectory_log_prob(mdp, policy, &theta, &tau)
                .map(f64::exp)
                .unwrap_or(0.0)
        })
        .sum();
    let norm_margin = 1e-9 - (total - 1.0).abs();
    outcomes.push(CheckOutcome {
        name: "probability_normalization",
        margin: norm_margin,
        pass: norm_margin >= 0.0,
    });
    if norm_margin < 0.0 {
        return Err(Error::NumericalFailure(format!(
            "probability_normalization: sum {total}"
        )));
    }

    // Gradient/Hessian expressions against central finite differences.
    let mut grad_margin = f64::INFINITY;
    let mut hess_margin = f64::INFINITY;
    for _ in 0..5 {
        let theta = random_theta(dim, &mut stream);
        let exact = exact_derivatives(mdp, policy, &theta, None)?;
        let fd_g = finite_diff_grad(mdp, policy, &theta, 1e-4, None)?;
        let fd_h = finite_diff_hess(mdp, policy, &theta, 1e-4, None)?;
        grad_margin = grad_margin.min(1e-7 - (&exact.gradient - fd_g).amax());
        hess_margin = hess_margin.min(1e-5 - (&exact.hessian - fd_h).amax());
    }
    outcomes.push(CheckOutcome {
        name: "gradient_vs_finite_difference",
        margin: grad_margin,
        pass: grad_margin >= 0.0,
    });
    outcomes.push(CheckOutcome {
        name: "hessian_vs_finite_difference",
        margin: hess_margin,
        pass: hess_margin >= 0.0,
    });
    if grad_margin < 0.0 || hess_margin < 0.0 {
        return Err(Error::NumericalFailure(
            "finite-difference agreement failed".into(),
        ));
    }

    // Estimator unbiasedness: probability-weighted sums equal the exact
    // derivatives.
    let mut unbiased_margin = f64::INFINITY;
    for _ in 0..5 {
        let theta = random_theta(dim, &mut stream);
        let exact = exact_derivatives(mdp, policy, &theta, None)?;
        let mut grad_sum = DVector::zeros(dim);
        let mut hess_sum = nalgebra::DMatrix::zeros(dim, dim);
        for (tau, _) in enumerate_trajectories(mdp, None)? {
            let p = trajectory_log_prob(mdp, policy, &theta, &tau)?.exp();
            grad_sum += p * phi_grad(mdp, policy, &theta, &tau);
            hess_sum += p * single_traj_hessian(mdp, policy, &theta, &tau);
        }
        unbiased_margin = unbiased_margin
            .min(1e-9 - (grad_sum - &exact.gradient).amax())
            .min(1e-9 - (hess_sum - &exact.hessian).amax());
    }
    outcomes.push(CheckOutcome {
        name: "estimator_unbiasedness",
        margin: unbiased_margin,
        pass: unbiased_margin >= 0.0,
    });
    if unbiased_margin < 0.0 {
        return Err(Error::NumericalFailure(
            "estimator_unbiasedness failed".into(),
        ));
    }

    // Almost-sure deviation bounds over sampled trajectories.
    let b = policy.bounds();
    let consts = compute_constants(
        mdp.cost_bound,
        b.grad_bound,
        b.hess_bound,
        b.hess_lipschitz,
        mdp.horizon,
    )?;
    let mut dev_margin = f64::INFINITY;
    for probe in 0..2 {
        let theta = random_theta(dim, &mut stream);
        let exact = exact_derivatives(mdp, policy, &theta, None)?;
        let batch = sample_batch(mdp, policy, &theta, 2000, seed ^ (probe + 1))?;
        for tau in &batch.trajectories {
            let g_dev = (phi_grad(mdp, policy, &theta, tau) - &exact.gradient).norm();
            dev_margin = dev_margin.min(consts.m1 - g_dev);
            let h_dev = operator_norm_symmetric(
                &(single_traj_hessian(mdp, policy, &theta, tau) - &exact.hessian),
            );
            dev_margin = dev_margin.min(consts.m2 - h_dev);
        }
    }
    outcomes.push(CheckOutcome {
        name: "almost_sure_deviation_bounds",
        margin: dev_margin,
        pass: dev_margin >= 0.0,
    });
    if dev_margin < 0.0 {
        return Err(Error::NumericalFailure(
            "almost_sure_deviation_bounds failed".into(),
        ));
    }

    Ok(outcomes)
}

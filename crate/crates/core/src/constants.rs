//! Smoothness constants and batch/step schedules.
//!
//! From the primitive bounds `K` (cost), `G`, `L1`, `L2` (policy score
//! bounds) and the horizon `H`, every derived constant follows in closed
//! form:
//!
//! - `G_g = G K H^2`: single-trajectory gradient-estimate norm bound,
//! - `M_Hess = K G H^3`: objective Lipschitz constant (gradient norm bound),
//! - `G_Hess = H^3 G^2 K + L1 K H^2`: gradient Lipschitz / Hessian bound,
//! - `L_Hess = H^4 G^3 K + 3 H^3 G L1 K + L2 K H^2`: Hessian Lipschitz,
//! - `M1 = G K H^2 (H + 1)`, `M2 = 2 G_Hess`: almost-sure single-trajectory
//!   deviation bounds for gradient and Hessian estimates.

use crate::error::{Error, Result};
use serde::Serialize;

/// Primitive and derived smoothness constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothnessConstants {
    pub cost_bound: f64,
    pub grad_bound: f64,
    pub hess_bound: f64,
    pub hess_lipschitz: f64,
    pub horizon: usize,
    pub g_g: f64,
    pub m_hess: f64,
    pub g_hess: f64,
    pub l_hess: f64,
    pub m1: f64,
    pub m2: f64,
}

/// Computes all derived constants from `(K, G, L1, L2, H)`.
pub fn compute_constants(
    cost_bound: f64,
    grad_bound: f64,
    hess_bound: f64,
    hess_lipschitz: f64,
    horizon: usize,
) -> Result<SmoothnessConstants> {
    if cost_bound <= 0.0 || grad_bound <= 0.0 || hess_bound <= 0.0 || hess_lipschitz <= 0.0 {
        return Err(Error::InvalidInput(
            "constants K, G, L1, L2 must be positive".into(),
        ));
    }
    if horizon < 1 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let (k, g, l1, l2) = (cost_bound, grad_bound, hess_bound, hess_lipschitz);
    let h = horizon as f64;
    let g_g = g * k * h * h;
    let m_hess = k * g * h * h * h;
    let g_hess = h * h * h * g * g * k + l1 * k * h * h;
    let l_hess = h * h * h * h * g * g * g * k + 3.0 * h * h * h * g * l1 * k + l2 * k * h * h;
    let m1 = g * k * h * h * (h + 1.0);
    let m2 = 2.0 * g_hess;
    Ok(SmoothnessConstants {
        cost_bound,
        grad_bound,
        hess_bound,
        hess_lipschitz,
        horizon,
        g_g,
        m_hess,
        g_hess,
        l_hess,
        m1,
        m2,
    })
}

/// Schedule mode: bounds that hold in expectation or with high probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScheduleMode {
    Expectation,
    HighProbability {
        delta_prime: f64,
        /// Gradient concentration level `t = 2 eps / 5`.
        t: f64,
        /// Hessian concentration level `t1 = eps / 144`.
        t1: f64,
        /// Overall failure budget `2 N delta'`.
        failure_budget: f64,
    },
}

/// Per-iteration regularizer, batch sizes, and iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub alpha: f64,
    pub iters: usize,
    pub grad_batch: usize,
    pub hess_batch: usize,
    /// Minimum Hessian batch `ceil(4 (1 + 2 ln 2d))` assumed by the
    /// third-moment variance bound; carried as an input for reporting, the
    /// scheduled batch normally dwarfs it.
    pub hess_batch_floor: usize,
    pub mode: ScheduleMode,
}

fn ceil_to_count(x: f64, what: &str) -> Result<usize> {
    if !x.is_finite() || x < 0.0 || x > 1e18 {
        return Err(Error::InvalidInput(format!("{what} overflows a count: {x}")));
    }
    Ok((x.ceil() as usize).max(1))
}

fn common_iters(c: &SmoothnessConstants, epsilon: f64) -> f64 {
    // N = 24 K H sqrt(L_Hess) / eps^1.5, using J(theta_0) - J* <= 2 K H.
    24.0 * c.cost_bound * c.horizon as f64 * c.l_hess.sqrt() / epsilon.powf(1.5)
}

fn hess_batch_floor(dim: usize) -> usize {
    (4.0 * (1.0 + 2.0 * (2.0 * dim as f64).ln())).ceil() as usize
}

/// Expectation-mode schedule:
/// `alpha = 3 L_Hess`, `m_k = ceil(25 G_g^2 / (4 eps^2))`,
/// `b_k = ceil(36 (30 (1 + 2 ln 2d))^{1/3} d^{2/3} G_Hess^2 / eps)`,
/// `N = ceil(24 K H sqrt(L_Hess) / eps^{1.5})`.
pub fn schedule_expectation(
    c: &SmoothnessConstants,
    epsilon: f64,
    dim: usize,
) -> Result<Schedule> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    if dim < 1 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let d = dim as f64;
    let alpha = 3.0 * c.l_hess;
    let grad_batch = ceil_to_count(25.0 * c.g_g * c.g_g / (4.0 * epsilon * epsilon), "m_k")?;
    let log_term = 30.0 * (1.0 + 2.0 * (2.0 * d).ln());
    let hess_batch = ceil_to_count(
        36.0 * log_term.cbrt() * d.powf(2.0 / 3.0) * c.g_hess * c.g_hess / epsilon,
        "b_k",
    )?;
    let iters = ceil_to_count(common_iters(c, epsilon), "N")?;
    Ok(Schedule {
        alpha,
        iters,
        grad_batch,
        hess_batch,
        hess_batch_floor: hess_batch_floor(dim),
        mode: ScheduleMode::Expectation,
    })
}

/// High-probability schedule with `t = 2 eps / 5`, `t1 = eps / 144`:
/// `m_k = ceil(max(M1/t, M1^2/t^2) (8/3) ln(2d/delta'))`,
/// `b_k = ceil(max(M2/sqrt(t1), M2^2/t1) (8/3) ln(2d/delta'))`.
/// The certified failure budget over the run is `2 N delta'`.
pub fn schedule_highprob(
    c: &SmoothnessConstants,
    epsilon: f64,
    delta_prime: f64,
    dim: usize,
) -> Result<Schedule> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    if !(0.0 < delta_prime && delta_prime < 1.0) {
        return Err(Error::InvalidInput(format!(
            "delta' = {delta_prime} must lie in (0, 1)"
        )));
    }
    if dim < 1 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let d = dim as f64;
    let t = 2.0 * epsilon / 5.0;
    let t1 = epsilon / 144.0;
    let log_term = 8.0 / 3.0 * (2.0 * d / delta_prime).ln();

    let rg = c.m1 / t;
    let grad_batch = ceil_to_count(rg.max(rg * rg) * log_term, "m_k")?;
    let rh = c.m2 / t1.sqrt();
    let hess_batch = ceil_to_count(rh.max(rh * rh) * log_term, "b_k")?;
    let iters = ceil_to_count(common_iters(c, epsilon), "N")?;
    Ok(Schedule {
        alpha: 3.0 * c.l_hess,
        iters,
        grad_batch,
        hess_batch,
        hess_batch_floor: hess_batch_floor(dim),
        mode: ScheduleMode::HighProbability {
            delta_prime,
            t,
            t1,
            failure_budget: 2.0 * iters as f64 * delta_prime,
        },
    })
}

//! Finite-horizon tabular MDPs, trajectories, discounted costs and cost-to-go.
//!
//! Conventions: state/action indices are `usize`; the discount weight of step
//! `h` is `gamma^h` for `h = 0..H-1`; trajectory probabilities are computed in
//! log space so long horizons do not underflow.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const ROW_SUM_TOL: f64 = 1e-12;

/// Default cap on `S * (A*S)^H`, the worst-case number of weighted paths the
/// enumeration oracle may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// A finite-horizon tabular MDP.
///
/// `transition[s][a][s']` is the probability of moving to `s'` from `s` under
/// action `a`; `cost[s][a]` is the single-stage cost, bounded by `cost_bound`
/// in absolute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub num_states: usize,
    pub num_actions: usize,
    /// Row-major S x A x S transition tensor.
    pub transition: Vec<f64>,
    /// Row-major S x A cost table.
    pub cost: Vec<f64>,
    pub cost_bound: f64,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
    pub horizon: usize,
}

impl FiniteMdp {
    /// Builds and validates an MDP; fails on the first violated invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        cost: Vec<f64>,
        cost_bound: f64,
        discount: f64,
        initial_dist: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let mdp = Self {
            num_states,
            num_actions,
            transition,
            cost,
            cost_bound,
            discount,
            initial_dist,
            horizon,
        };
        let report = validate_mdp(&mdp);
        if let Some(check) = report.first_failure() {
            return Err(Error::InvalidMdp(check.detail.clone()));
        }
        Ok(mdp)
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + s_next]
    }

    #[inline]
    pub fn c(&self, s: usize, a: usize) -> f64 {
        self.cost[s * self.num_actions + a]
    }

    /// Worst-case number of weighted paths visited by enumeration:
    /// `S * (A*S)^H`.
    pub fn weighted_path_bound(&self) -> u128 {
        let base = (self.num_actions as u128).saturating_mul(self.num_states as u128);
        let mut total = self.num_states as u128;
        for _ in 0..self.horizon {
            total = total.saturating_mul(base);
        }
        total
    }
}

/// Result of one invariant check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Per-invariant pass/fail produced by [`validate_mdp`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }
}

/// Checks every structural invariant of the MDP, reporting the first
/// violating index per check.
pub fn validate_mdp(mdp: &FiniteMdp) -> ValidationReport {
    let mut checks = Vec::new();
    let s_count = mdp.num_states;
    let a_count = mdp.num_actions;

    fn push(checks: &mut Vec<Check>, name: &'static str, pass: bool, detail: String) {
        checks.push(Check { name, pass, detail });
    }

    let shape_ok = s_count >= 1
        && a_count >= 1
        && mdp.horizon >= 1
        && mdp.transition.len() == s_count * a_count * s_count
        && mdp.cost.len() == s_count * a_count
        && mdp.initial_dist.len() == s_count;
    push(
        &mut checks,
        "shape",
        shape_ok,
        format!(
            "S={} A={} H={} |P|={} |c|={} |rho|={}",
            s_count,
            a_count,
            mdp.horizon,
            mdp.transition.len(),
            mdp.cost.len(),
            mdp.initial_dist.len()
        ),
    );
    if !shape_ok {
        return ValidationReport { checks };
    }

    push(
        &mut checks,
        "discount range",
        mdp.discount > 0.0 && mdp.discount <= 1.0,
        format!("gamma={}", mdp.discount),
    );

    let mut row_ok = true;
    let mut row_detail = String::from("all rows sum to 1");
    'rows: for s in 0..s_count {
        for a in 0..a_count {
            let mut sum = 0.0;
            for s2 in 0..s_count {
                let p = mdp.p(s, a, s2);
                if p < 0.0 {
                    row_ok = false;
                    row_detail = format!("P[{s}][{a}][{s2}] = {p} < 0");
                    break 'rows;
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                row_ok = false;
                row_detail = format!("row sum != 1 at P[{s}][{a}]: {sum}");
                break 'rows;
            }
        }
    }
    push(&mut checks, "transition rows", row_ok, row_detail);

    let mut rho_ok = true;
    let mut rho_detail = String::from("initial distribution sums to 1");
    let mut rho_sum = 0.0;
    for (s, &p) in mdp.initial_dist.iter().enumerate() {
        if p < 0.0 {
            rho_ok = false;
            rho_detail = format!("rho[{s}] = {p} < 0");
            break;
        }
        rho_sum += p;
    }
    if rho_ok && (rho_sum - 1.0).abs() > ROW_SUM_TOL {
        rho_ok = false;
        rho_detail = format!("rho sums to {rho_sum}");
    }
    push(&mut checks, "initial distribution", rho_ok, rho_detail);

    let mut cost_ok = mdp.cost_bound >= 0.0;
    let mut cost_detail = format!("all |c| <= K = {}", mdp.cost_bound);
    if !cost_ok {
        cost_detail = format!("cost bound K = {} < 0", mdp.cost_bound);
    } else {
        'costs: for s in 0..s_count {
            for a in 0..a_count {
                let c = mdp.c(s, a);
                if c.abs() > mdp.cost_bound {
                    cost_ok = false;
                    cost_detail = format!("cost bound: |c[{s}][{a}]| = {} > K = {}", c.abs(), mdp.cost_bound);
                    break 'costs;
                }
            }
        }
    }
    push(&mut checks, "cost bound", cost_ok, cost_detail);

    ValidationReport { checks }
}

/// One episode: states `s_0..s_H` and actions `a_0..a_{H-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if states.len() != actions.len() + 1 {
            return Err(Error::InvalidTrajectory(format!(
                "{} states vs {} actions",
                states.len(),
                actions.len()
            )));
        }
        Ok(Self { states, actions })
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// Index bounds and length against a given MDP.
    pub fn check_against(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.actions.len() != mdp.horizon || self.states.len() != mdp.horizon + 1 {
            return Err(Error::InvalidTrajectory(format!(
                "length mismatch: {} actions for horizon {}",
                self.actions.len(),
                mdp.horizon
            )));
        }
        if let Some(&s) = self.states.iter().find(|&&s| s >= mdp.num_states) {
            return Err(Error::InvalidTrajectory(format!("state index {s} out of range")));
        }
        if let Some(&a) = self.actions.iter().find(|&&a| a >= mdp.num_actions) {
            return Err(Error::InvalidTrajectory(format!("action index {a} out of range")));
        }
        Ok(())
    }
}

/// Log probability of `tau` under the policy with parameters `theta`:
/// `log rho(s_0) + sum_h [log P(s_{h+1}|s_h,a_h) + log pi(a_h|s_h)]`.
/// Returns `-inf` if any factor is exactly zero.
pub fn trajectory_log_prob<P: crate::policy::Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &crate::policy::PolicyParams,
    tau: &Trajectory,
) -> Result<f64> {
    tau.check_against(mdp)?;
    policy.check_theta(theta)?;
    let rho0 = mdp.initial_dist[tau.states[0]];
    if rho0 == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut log_p = rho0.ln();
    for h in 0..mdp.horizon {
        let (s, a, s_next) = (tau.states[h], tau.actions[h], tau.states[h + 1]);
        let p = mdp.p(s, a, s_next);
        if p == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_p += p.ln() + policy.log_prob(theta, s, a);
    }
    Ok(log_p)
}

/// Discounted cumulative cost `sum_{h=0}^{H-1} gamma^h c(s_h, a_h)`.
pub fn discounted_cost(mdp: &FiniteMdp, tau: &Trajectory) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for h in 0..tau.horizon() {
        total += weight * mdp.c(tau.states[h], tau.actions[h]);
        weight *= mdp.discount;
    }
    total
}

/// Cost-to-go from step `i`: `sum_{h=i}^{H-1} gamma^h c(s_h, a_h)`.
/// `psi(tau, 0)` equals [`discounted_cost`].
pub fn psi(mdp: &FiniteMdp, tau: &Trajectory, i: usize) -> Result<f64> {
    if i >= tau.horizon() {
        return Err(Error::IndexOutOfRange {
            index: i,
            horizon: tau.horizon(),
        });
    }
    let mut total = 0.0;
    let mut weight = mdp.discount.powi(i as i32);
    for h in i..tau.horizon() {
        total += weight * mdp.c(tau.states[h], tau.actions[h]);
        weight *= mdp.discount;
    }
    Ok(total)
}

/// All cost-to-go values `psi(tau, 0..H)` in one backward pass.
pub fn psi_all(mdp: &FiniteMdp, tau: &Trajectory) -> Vec<f64> {
    let h_len = tau.horizon();
    let mut out = vec![0.0; h_len];
    let mut acc = 0.0;
    for i in (0..h_len).rev() {
        let weight = mdp.discount.powi(i as i32);
        acc += weight * mdp.c(tau.states[i], tau.actions[i]);
        out[i] = acc;
    }
    out
}

/// Enumerates every trajectory with nonzero structural support, paired with
/// its policy-independent dynamics weight `rho(s_0) * prod_h P(s_{h+1}|s_h,a_h)`.
///
/// Fails with [`Error::CapExceeded`] when `S * (A*S)^H` exceeds `cap`.
pub fn enumerate_trajectories(
    mdp: &FiniteMdp,
    cap: Option<u128>,
) -> Result<TrajectoryEnumeration<'_>> {
    let cap = cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
    let bound = mdp.weighted_path_bound();
    if bound > cap {
        return Err(Error::CapExceeded {
            weighted_paths: bound,
            cap,
        });
    }
    Ok(TrajectoryEnumeration::new(mdp))
}

/// Depth-first iterator over structurally supported trajectories.
/// Single-consumer; yields each trajectory exactly once.
pub struct TrajectoryEnumeration<'a> {
    mdp: &'a FiniteMdp,
    // Stack of (partial states, partial actions, dynamics weight).
    stack: Vec<(Vec<usize>, Vec<usize>, f64)>,
}

impl<'a> TrajectoryEnumeration<'a> {
    fn new(mdp: &'a FiniteMdp) -> Self {
        let mut stack = Vec::new();
        // Reverse order so state 0 is explored first.
        for s0 in (0..mdp.num_states).rev() {
            let w = mdp.initial_dist[s0];
            if w > 0.0 {
                stack.push((vec![s0], Vec::new(), w));
            }
        }
        Self { mdp, stack }
    }
}

impl Iterator for TrajectoryEnumeration<'_> {
    type Item = (Trajectory, f64);

    fn next(&mut self) -> Option<Self::Item> {
        while let Some((states, actions, weight)) = self.stack.pop() {
            if actions.len() == self.mdp.horizon {
                return Some((Trajectory { states, actions }, weight));
            }
            let s = *states.last().unwrap();
            for a in (0..self.mdp.num_actions).rev() {
                for s_next in (0..self.mdp.num_states).rev() {
                    let p = self.mdp.p(s, a, s_next);
                    if p > 0.0 {
                        let mut ns = states.clone();
                        ns.push(s_next);
                        let mut na = actions.clone();
                        na.push(a);
                        self.stack.push((ns, na, weight * p));
                    }
                }
            }
        }
        None
    }
}

//! Differentiable parameterized policies.
//!
//! A [`Policy`] exposes `log pi(a|s; theta)` together with its analytic
//! gradient and Hessian in `theta`, plus declared norm bounds `G`, `L1`, `L2`
//! (gradient bound, Hessian bound, Hessian Lipschitz constant). The declared
//! bounds are engineering choices validated empirically by
//! [`certify_bounds`], not derived constants.

use crate::error::{Error, Result};
use crate::rng::Stream;
use nalgebra::{DMatrix, DVector};

/// Policy parameter vector; entries must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub theta: DVector<f64>,
}

impl PolicyParams {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite parameter {x}")));
        }
        Ok(Self {
            theta: DVector::from_vec(values),
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            theta: DVector::zeros(dim),
        }
    }

    pub fn from_vector(theta: DVector<f64>) -> Self {
        Self { theta }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Declared norm bounds for a policy class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyBounds {
    /// Bound on the score norm: `||grad log pi|| <= G`.
    pub grad_bound: f64,
    /// Bound on the score Hessian norm: `||hess log pi|| <= L1`.
    pub hess_bound: f64,
    /// Lipschitz constant of the score Hessian in `theta`.
    pub hess_lipschitz: f64,
}

/// A differentiable policy over tabular states and actions.
pub trait Policy {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn dim(&self) -> usize;
    fn bounds(&self) -> PolicyBounds;

    fn check_theta(&self, theta: &PolicyParams) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: theta.dim(),
            });
        }
        Ok(())
    }

    /// `log pi(a|s; theta)`.
    fn log_prob(&self, theta: &PolicyParams, s: usize, a: usize) -> f64;

    /// Action probabilities at state `s`.
    fn action_probs(&self, theta: &PolicyParams, s: usize) -> Vec<f64>;

    /// `acc += w * grad_theta log pi(a|s; theta)`.
    fn add_scaled_grad_log_prob(
        &self,
        theta: &PolicyParams,
        s: usize,
        a: usize,
        w: f64,
        acc: &mut DVector<f64>,
    );

    /// `acc += w * hess_theta log pi(a|s; theta)`.
    fn add_scaled_hess_log_prob(
        &self,
        theta: &PolicyParams,
        s: usize,
        a: usize,
        w: f64,
        acc: &mut DMatrix<f64>,
    );

    /// `acc += w * (hess_theta log pi(a|s; theta)) v` without materializing
    /// the d x d Hessian.
    fn add_scaled_hess_log_prob_vp(
        &self,
        theta: &PolicyParams,
        s: usize,
        a: usize,
        w: f64,
        v: &DVector<f64>,
        acc: &mut DVector<f64>,
    );

    fn grad_log_prob(&self, theta: &PolicyParams, s: usize, a: usize) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        self.add_scaled_grad_log_prob(theta, s, a, 1.0, &mut g);
        g
    }

    fn hess_log_prob(&self, theta: &PolicyParams, s: usize, a: usize) -> DMatrix<f64> {
        crate::diag::note_dense_alloc();
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        self.add_scaled_hess_log_prob(theta, s, a, 1.0, &mut h);
        h
    }

    /// Draws an action from `pi(.|s; theta)` by inverse CDF on a uniform.
    fn sample_action(&self, theta: &PolicyParams, s: usize, uniform: f64) -> usize {
        let probs = self.action_probs(theta, s);
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if uniform < acc {
                return a;
            }
        }
        probs.len() - 1
    }
}

/// Tabular softmax policy: `pi(a|s) = exp(theta[s*A+a]) / sum_a' exp(theta[s*A+a'])`.
///
/// Default declared bounds are `G = sqrt(2)`, `L1 = 1`, `L2 = 2`; these are
/// conservative and validated by [`certify_bounds`].
#[derive(Debug, Clone)]
pub struct TabularSoftmaxPolicy {
    num_states: usize,
    num_actions: usize,
    bounds: PolicyBounds,
}

impl TabularSoftmaxPolicy {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self::with_bounds(
            num_states,
            num_actions,
            PolicyBounds {
                grad_bound: std::f64::consts::SQRT_2,
                hess_bound: 1.0,
                hess_lipschitz: 2.0,
            },
        )
    }

    pub fn with_bounds(num_states: usize, num_actions: usize, bounds: PolicyBounds) -> Self {
        assert!(num_states >= 1 && num_actions >= 1);
        Self {
            num_states,
            num_actions,
            bounds,
        }
    }

    #[inline]
    fn block(&self, s: usize) -> std::ops::Range<usize> {
        s * self.num_actions..(s + 1) * self.num_actions
    }

    fn softmax(&self, theta: &PolicyParams, s: usize) -> Vec<f64> {
        let block = &theta.theta.as_slice()[self.block(s)];
        let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = block.iter().map(|&x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }
}

impl Policy for TabularSoftmaxPolicy {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn dim(&self) -> usize {
        self.num_states * self.num_actions
    }

    fn bounds(&self) -> PolicyBounds {
        self.bounds
    }

    fn log_prob(&self, theta: &PolicyParams, s: usize, a: usize) -> f64 {
        assert!(s < self.num_states && a < self.num_actions, "index out of range");
        let block = &theta.theta.as_slice()[self.block(s)];
        let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = block.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
        block[a] - log_sum
    }

    fn action_probs(&self, theta: &PolicyParams, s: usize) -> Vec<f64> {
        self.softmax(theta, s)
    }

    fn add_scaled_grad_log_prob(
        &self,
        theta: &PolicyParams,
        s: usize,
        a: usize,
        w: f64,
        acc: &mut DVector<f64>,
    ) {
        assert!(s < self.num_states && a < self.num_actions, "index out of range");
        let probs = self.softmax(theta, s);
        let base = s * self.num_actions;
        for (a2, p) in probs.iter().enumerate() {
            let indicator = if a2 == a { 1.0 } else { 0.0 };
            acc[base + a2] += w * (indicator - p);
        }
    }

    fn add_scaled_hess_log_prob(
        &self,
        theta: &PolicyParams,
        s: usize,
        a: usize,
        w: f64,
        acc: &mut DMatrix<f64>,
    ) {
        assert!(s < self.num_states && a < self.num_actions, "index out of range");
        // Block (s,s): -diag(pi) + pi pi^T; independent of the action.
        let probs = self.softmax(theta, s);
        let base = s * self.num_actions;
        for (i, pi) in probs.iter().enumerate() {
            for (j, pj) in probs.iter().enumerate() {
                let d = if i == j { -pi + pi * pj } else { pi * pj };
                acc[(base + i, base + j)] += w * d;
            }
        }
    }

    fn add_scaled_hess_log_prob_vp(
        &self,
        theta: &PolicyParams,
        s: usize,
        a: usize,
        w: f64,
        v: &DVector<f64>,
        acc: &mut DVector<f64>,
    ) {
        assert!(s < self.num_states && a < self.num_actions, "index out of range");
        // (-diag(pi) + pi pi^T) v restricted to block s, in O(A).
        let probs = self.softmax(theta, s);
        let base = s * self.num_actions;
        let dot: f64 = probs.iter().enumerate().map(|(i, p)| p * v[base + i]).sum();
        for (i, p) in probs.iter().enumerate() {
            acc[base + i] += w * p * (dot - v[base + i]);
        }
    }
}

/// Result of the empirical bound certification.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub probes: usize,
    pub max_grad_norm: f64,
    pub max_hess_norm: f64,
    pub max_hess_lipschitz_ratio: f64,
    pub declared: PolicyBounds,
    pub pass: bool,
}

impl BoundReport {
    pub fn margins(&self) -> [f64; 3] {
        [
            self.declared.grad_bound - self.max_grad_norm,
            self.declared.hess_bound - self.max_hess_norm,
            self.declared.hess_lipschitz - self.max_hess_lipschitz_ratio,
        ]
    }
}

/// Samples `probe_count` random `(theta, theta', s, a)` probes with
/// `theta in [-5, 5]^d` and reports the largest observed score norm, score
/// Hessian norm, and Hessian Lipschitz ratio against the declared bounds.
pub fn certify_bounds<P: Policy>(
    policy: &P,
    probe_count: usize,
    rng_seed: u64,
) -> Result<BoundReport> {
    if probe_count == 0 {
        return Err(Error::InvalidProbeCount);
    }
    let mut stream = Stream::substream(rng_seed, 0);
    let dim = policy.dim();
    let declared = policy.bounds();

    let random_theta = |stream: &mut Stream| {
        PolicyParams::from_vector(DVector::from_iterator(
            dim,
            (0..dim).map(|_| stream.uniform_in(-5.0, 5.0)),
        ))
    };

    let mut max_grad: f64 = 0.0;
    let mut max_hess: f64 = 0.0;
    let mut max_ratio: f64 = 0.0;
    for _ in 0..probe_count {
        let theta = random_theta(&mut stream);
        let theta2 = random_theta(&mut stream);
        let s = (stream.uniform() * policy.num_states() as f64) as usize % policy.num_states();
        let a = (stream.uniform() * policy.num_actions() as f64) as usize % policy.num_actions();

        let grad = policy.grad_log_prob(&theta, s, a);
        max_grad = max_grad.max(grad.norm());

        let hess = policy.hess_log_prob(&theta, s, a);
        max_hess = max_hess.max(crate::linalg::operator_norm_symmetric(&hess));

        let hess2 = policy.hess_log_prob(&theta2, s, a);
        let dtheta = (&theta.theta - &theta2.theta).norm();
        if dtheta > 1e-9 {
            let ratio = crate::linalg::operator_norm_symmetric(&(hess - hess2)) / dtheta;
            max_ratio = max_ratio.max(ratio);
        }
    }

    let pass = max_grad <= declared.grad_bound
        && max_hess <= declared.hess_bound
        && max_ratio <= declared.hess_lipschitz;
    Ok(BoundReport {
        probes: probe_count,
        max_grad_norm: max_grad,
        max_hess_norm: max_hess,
        max_hess_lipschitz_ratio: max_ratio,
        declared,
        pass,
    })
}

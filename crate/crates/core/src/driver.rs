//! End-to-end optimization drivers.
//!
//! [`run_crpn`] is the exact cubic-regularized policy Newton loop: per
//! iteration it samples a fresh batch, forms the gradient and dense Hessian
//! estimates, solves the cubic model exactly and steps; the output iterate
//! index `R` is drawn with probability proportional to `alpha_k`. [`run_acrpn`]
//! replaces the exact solve with the Cauchy/perturbed-gradient subsolver over
//! Hessian-vector products only, finishing with the high-accuracy final
//! solver when the model decrease stalls. [`run_reinforce`] is the plain
//! stochastic-gradient baseline.

use crate::constants::{self, Schedule, SmoothnessConstants};
use crate::cubic::{self, CubicModel, HessAccess};
use crate::error::{Error, Result};
use crate::estimator::{batch_gradient, batch_hessian, HvpHandle};
use crate::mdp::FiniteMdp;
use crate::oracle;
use crate::policy::{Policy, PolicyParams};
use crate::rng::{stream_seed, Stream};
use crate::sampler::sample_batch;
use nalgebra::DVector;
use serde::Serialize;
use std::io::Write;
use std::time::Instant;

/// Substream tags reserved by the driver; trajectory substreams use the
/// iteration seed directly, so tags live outside the batch index range.
const TAG_OUTPUT_INDEX: u64 = u64::MAX;
const TAG_SPHERE_NOISE: u64 = u64::MAX - 1;

/// Trajectory spaces up to this many weighted paths get an exact value in
/// the per-iteration trace.
const ORACLE_TRACE_CAP: u128 = 100_000;

/// Convergence mode for the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mode {
    Expectation,
    HighProbability { delta_prime: f64 },
}

/// Desk-scale overrides; every applied override is stamped into the report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub grad_batch: Option<usize>,
    pub hess_batch: Option<usize>,
    pub iters: Option<usize>,
    pub alpha: Option<f64>,
    pub c_prime: Option<f64>,
}

/// One row of the optimization trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Mean discounted cost of the gradient batch.
    pub j_batch: f64,
    /// Enumeration-exact value at the pre-step iterate, when cheap.
    pub j_oracle: Option<f64>,
    pub grad_norm_est: f64,
    pub step_norm: f64,
    /// Model value at the accepted step (absent for the gradient baseline).
    pub delta_j: Option<f64>,
    pub grad_batch: usize,
    pub hess_batch: usize,
    /// Smallest eigenvalue of the estimated Hessian (dense solves only).
    pub hess_min_eig: Option<f64>,
    pub wall_ms: u64,
}

/// Which algorithm produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Algorithm {
    Crpn,
    Acrpn,
    Reinforce,
}

/// Full optimization trace plus the selected output.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub epsilon: f64,
    pub mode: Mode,
    pub constants: SmoothnessConstants,
    /// Schedule actually used (after overrides).
    pub alpha: f64,
    pub iters: usize,
    pub grad_batch: usize,
    pub hess_batch: usize,
    pub overrides: Overrides,
    pub records: Vec<IterationRecord>,
    /// Selected output index; `P(R = k) = alpha_k / sum alpha_j`.
    pub output_index: usize,
    pub theta_out: Vec<f64>,
    /// Iterates `theta_1..theta_N` (the early-exit polish replaces the last
    /// entry's successor in `theta_out`, not the history).
    pub iterates: Vec<Vec<f64>>,
    pub total_trajectories: usize,
    pub early_exit: bool,
}

impl RunReport {
    pub fn theta_out_params(&self) -> PolicyParams {
        PolicyParams::from_vector(DVector::from_vec(self.theta_out.clone()))
    }

    /// Deterministic serialization of everything except wall-clock timing;
    /// byte-identical across reruns with the same seed and inputs.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_trace_csv_opts(self, &mut out, false).expect("vec write cannot fail");
        out.extend_from_slice(format!("R={} theta={:?}\n", self.output_index, self.theta_out).as_bytes());
        out
    }
}

fn resolved_schedule<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    epsilon: f64,
    mode: Mode,
) -> Result<(SmoothnessConstants, Schedule)> {
    let b = policy.bounds();
    let consts = constants::compute_constants(
        mdp.cost_bound,
        b.grad_bound,
        b.hess_bound,
        b.hess_lipschitz,
        mdp.horizon,
    )?;
    let schedule = match mode {
        Mode::Expectation => constants::schedule_expectation(&consts, epsilon, policy.dim())?,
        Mode::HighProbability { delta_prime } => {
            constants::schedule_highprob(&consts, epsilon, delta_prime, policy.dim())?
        }
    };
    Ok((consts, schedule))
}

fn oracle_trace<P: Policy>(mdp: &FiniteMdp, policy: &P, theta: &PolicyParams) -> Option<f64> {
    if mdp.weighted_path_bound() <= ORACLE_TRACE_CAP {
        oracle::exact_value(mdp, policy, theta, Some(ORACLE_TRACE_CAP)).ok()
    } else {
        None
    }
}

fn mean_batch_cost(mdp: &FiniteMdp, batch: &crate::sampler::SampleBatch, m: usize) -> f64 {
    batch.trajectories[..m]
        .iter()
        .map(|tau| crate::mdp::discounted_cost(mdp, tau))
        .sum::<f64>()
        / m as f64
}

/// Draws the output index from `{1..=n}` with `P(k) proportional to alphas[k-1]`.
pub fn draw_output_index(alphas: &[f64], seed: u64) -> usize {
    let mut stream = Stream::substream(seed, TAG_OUTPUT_INDEX);
    stream.categorical(alphas) + 1
}

/// Exact cubic-regularized policy Newton.
pub fn run_crpn<P: Policy + Sync>(
    mdp: &FiniteMdp,
    policy: &P,
    theta0: &PolicyParams,
    epsilon: f64,
    mode: Mode,
    seed: u64,
    overrides: &Overrides,
) -> Result<RunReport> {
    policy.check_theta(theta0)?;
    let (consts, schedule) = resolved_schedule(mdp, policy, epsilon, mode)?;
    let alpha = overrides.alpha.unwrap_or(schedule.alpha);
    let iters = overrides.iters.unwrap_or(schedule.iters);
    let m_k = overrides.grad_batch.unwrap_or(schedule.grad_batch);
    let b_k = overrides.hess_batch.unwrap_or(schedule.hess_batch);
    if alpha <= 0.0 || iters == 0 || m_k == 0 || b_k == 0 {
        return Err(Error::InvalidInput("schedule values must be positive".into()));
    }

    let mut theta = theta0.clone();
    let mut iterates: Vec<PolicyParams> = Vec::with_capacity(iters);
    let mut records = Vec::with_capacity(iters);
    let n_batch = m_k.max(b_k);

    for k in 1..=iters {
        let start = Instant::now();
        let iter_seed = stream_seed(seed, k as u64);
        let batch = sample_batch(mdp, policy, &theta, n_batch, iter_seed)?;
        let grad = batch_gradient(mdp, policy, &batch, m_k)?;
        let hess = batch_hessian(mdp, policy, &batch, b_k)?;
        let model = CubicModel::new(
            grad.mean.clone(),
            HessAccess::Dense(&hess.mean),
            alpha,
            consts.g_hess,
        )?;
        let sol = cubic::solve_exact(&model).map_err(|e| {
            Error::NumericalFailure(format!("iteration {k}: {e}"))
        })?;

        let j_oracle = oracle_trace(mdp, policy, &theta);
        records.push(IterationRecord {
            iter: k,
            j_batch: mean_batch_cost(mdp, &batch, m_k),
            j_oracle,
            grad_norm_est: grad.mean.norm(),
            step_norm: sol.delta.norm(),
            delta_j: Some(sol.model_value),
            grad_batch: m_k,
            hess_batch: b_k,
            hess_min_eig: sol.hess_min_eig,
            wall_ms: start.elapsed().as_millis() as u64,
        });

        theta = PolicyParams::from_vector(&theta.theta + &sol.delta);
        iterates.push(theta.clone());
    }

    let alphas = vec![alpha; iters];
    let output_index = draw_output_index(&alphas, seed);
    let theta_out = iterates[output_index - 1].clone();

    Ok(RunReport {
        algorithm: Algorithm::Crpn,
        seed,
        epsilon,
        mode,
        constants: consts,
        alpha,
        iters,
        grad_batch: m_k,
        hess_batch: b_k,
        overrides: *overrides,
        records,
        output_index,
        theta_out: theta_out.theta.as_slice().to_vec(),
        iterates: iterates
            .iter()
            .map(|t| t.theta.as_slice().to_vec())
            .collect(),
        total_trajectories: n_batch * iters,
        early_exit: false,
    })
}

/// Theorem-style guard constants for the approximate path's batch sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcrpnGuards {
    pub c1: f64,
    pub c3: f64,
    pub c4: f64,
    pub delta_prime: f64,
}

impl Default for AcrpnGuards {
    fn default() -> Self {
        Self {
            c1: 1.0 / 300.0,
            c3: 1.0 / 200.0,
            c4: 1.0 / 200.0,
            delta_prime: 0.05,
        }
    }
}

/// Default ACR-PN batch sizes
/// `m_k = ceil(max(M1/(c1 eps), M1^2/(c3^2 eps^2)) ln(d sqrt(rho)/(eps^1.5 delta' c3)))`
/// and the analogous Hessian-product batch with `rho = L_Hess`.
pub fn acrpn_batches(
    c: &SmoothnessConstants,
    epsilon: f64,
    dim: usize,
    guards: &AcrpnGuards,
) -> Result<(usize, usize)> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    let rho = c.l_hess;
    let d = dim as f64;
    let log_m = (d * rho.sqrt() / (epsilon.powf(1.5) * guards.delta_prime * guards.c3))
        .ln()
        .max(1.0);
    let log_b = (d * rho.sqrt() / (epsilon.powf(1.5) * guards.delta_prime * guards.c4))
        .ln()
        .max(1.0);
    let m = (c.m1 / (guards.c1 * epsilon)).max((c.m1 / (guards.c3 * epsilon)).powi(2)) * log_m;
    let b = (c.m2 / (guards.c4 * (rho * epsilon).sqrt()))
        .max((c.m2 / guards.c4).powi(2) / (rho * epsilon))
        * log_b;
    let clamp = |x: f64| -> usize { x.min(1e18).ceil().max(1.0) as usize };
    Ok((clamp(m), clamp(b)))
}

/// Approximate cubic-regularized policy Newton over Hessian-vector products.
///
/// Per iteration: Cauchy step when the gradient estimate is large, otherwise
/// `ceil(1/sqrt(eps))` perturbed gradient-descent steps on the model. When
/// the model decrease `delta_J` fails to beat `-(1/100) sqrt(eps^3/rho)`,
/// the final solver polishes the current model to `||g_J|| < eps/2` and the
/// run returns early.
pub fn run_acrpn<P: Policy + Sync>(
    mdp: &FiniteMdp,
    policy: &P,
    theta0: &PolicyParams,
    epsilon: f64,
    seed: u64,
    overrides: &Overrides,
) -> Result<RunReport> {
    policy.check_theta(theta0)?;
    let mode = Mode::Expectation;
    let (consts, schedule) = resolved_schedule(mdp, policy, epsilon, mode)?;
    let rho = overrides.alpha.unwrap_or(consts.l_hess);
    let l = consts.g_hess;
    let iters = overrides.iters.unwrap_or(schedule.iters);
    let guards = AcrpnGuards::default();
    let (default_m, default_b) = acrpn_batches(&consts, epsilon, policy.dim(), &guards)?;
    let m_k = overrides.grad_batch.unwrap_or(default_m);
    let b_k = overrides.hess_batch.unwrap_or(default_b);
    let c_prime = overrides.c_prime.unwrap_or(0.1);
    if rho <= 0.0 || iters == 0 || m_k == 0 || b_k == 0 {
        return Err(Error::InvalidInput("schedule values must be positive".into()));
    }
    let inner_iters = (1.0 / epsilon.sqrt()).ceil() as usize;
    let exit_threshold = -(1.0 / 100.0) * (epsilon.powi(3) / rho).sqrt();

    let mut theta = theta0.clone();
    let mut records = Vec::new();
    let mut iterates: Vec<Vec<f64>> = Vec::new();
    let n_batch = m_k.max(b_k);
    let mut early_exit = false;
    let mut output_index = iters;
    let mut theta_star: Option<PolicyParams> = None;

    for k in 1..=iters {
        let start = Instant::now();
        let iter_seed = stream_seed(seed, k as u64);
        let batch = sample_batch(mdp, policy, &theta, n_batch, iter_seed)?;
        let grad = batch_gradient(mdp, policy, &batch, m_k)?;
        let handle = HvpHandle::new(mdp, policy, &batch, b_k)?;
        let apply = |v: &DVector<f64>| handle.apply(v);
        let model = CubicModel::new(grad.mean.clone(), HessAccess::Operator(&apply), rho, l)?;

        let mut noise = Stream::substream(iter_seed, TAG_SPHERE_NOISE);
        let (delta, delta_j, _kind) =
            cubic::cubic_subsolver(&model, epsilon, inner_iters, c_prime, &mut noise)?;

        let j_oracle = oracle_trace(mdp, policy, &theta);
        records.push(IterationRecord {
            iter: k,
            j_batch: mean_batch_cost(mdp, &batch, m_k),
            j_oracle,
            grad_norm_est: grad.mean.norm(),
            step_norm: delta.norm(),
            delta_j: Some(delta_j),
            grad_batch: m_k,
            hess_batch: b_k,
            hess_min_eig: None,
            wall_ms: start.elapsed().as_millis() as u64,
        });

        let theta_base = theta.clone();
        theta = PolicyParams::from_vector(&theta.theta + &delta);
        iterates.push(theta.theta.as_slice().to_vec());

        if delta_j >= exit_threshold {
            let polished =
                cubic::cubic_finalsolver(&model, epsilon, cubic::DEFAULT_FINALSOLVER_CAP)?;
            theta_star = Some(PolicyParams::from_vector(&theta_base.theta + &polished));
            early_exit = true;
            output_index = k;
            break;
        }
    }

    let theta_out = theta_star.unwrap_or(theta);
    let total = n_batch * records.len();
    Ok(RunReport {
        algorithm: Algorithm::Acrpn,
        seed,
        epsilon,
        mode,
        constants: consts,
        alpha: rho,
        iters,
        grad_batch: m_k,
        hess_batch: b_k,
        overrides: *overrides,
        records,
        output_index,
        theta_out: theta_out.theta.as_slice().to_vec(),
        iterates,
        total_trajectories: total,
        early_exit,
    })
}

/// Plain REINFORCE baseline: `theta_k = theta_{k-1} - step * g_bar_k`.
/// The output is the final iterate.
pub fn run_reinforce<P: Policy + Sync>(
    mdp: &FiniteMdp,
    policy: &P,
    theta0: &PolicyParams,
    step_size: f64,
    iters: usize,
    batch: usize,
    seed: u64,
) -> Result<RunReport> {
    policy.check_theta(theta0)?;
    if step_size < 0.0 {
        return Err(Error::InvalidInput("step size must be nonnegative".into()));
    }
    if iters == 0 || batch == 0 {
        return Err(Error::InvalidCount("iters and batch must be positive".into()));
    }
    let b = policy.bounds();
    let consts = constants::compute_constants(
        mdp.cost_bound,
        b.grad_bound,
        b.hess_bound,
        b.hess_lipschitz,
        mdp.horizon,
    )?;

    let mut theta = theta0.clone();
    let mut records = Vec::with_capacity(iters);
    let mut iterates: Vec<Vec<f64>> = Vec::with_capacity(iters);
    for k in 1..=iters {
        let start = Instant::now();
        let iter_seed = stream_seed(seed, k as u64);
        let sample = sample_batch(mdp, policy, &theta, batch, iter_seed)?;
        let grad = batch_gradient(mdp, policy, &sample, batch)?;
        let step = -step_size * &grad.mean;
        let j_oracle = oracle_trace(mdp, policy, &theta);
        records.push(IterationRecord {
            iter: k,
            j_batch: mean_batch_cost(mdp, &sample, batch),
            j_oracle,
            grad_norm_est: grad.mean.norm(),
            step_norm: step.norm(),
            delta_j: None,
            grad_batch: batch,
            hess_batch: 0,
            hess_min_eig: None,
            wall_ms: start.elapsed().as_millis() as u64,
        });
        theta = PolicyParams::from_vector(&theta.theta + &step);
        iterates.push(theta.theta.as_slice().to_vec());
    }

    Ok(RunReport {
        algorithm: Algorithm::Reinforce,
        seed,
        epsilon: 0.0,
        mode: Mode::Expectation,
        constants: consts,
        alpha: step_size,
        iters,
        grad_batch: batch,
        hess_batch: 0,
        overrides: Overrides::default(),
        records,
        output_index: iters,
        theta_out: theta.theta.as_slice().to_vec(),
        iterates,
        total_trajectories: batch * iters,
        early_exit: false,
    })
}

/// Formats a float with 17 significant digits, enough to round-trip f64.
fn full_precision(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the trace as CSV with the stable schema
/// `iter,J_oracle,grad_norm_est,step_norm,delta_J,m_k,b_k,wall_ms`.
pub fn write_trace_csv<W: Write>(report: &RunReport, w: &mut W) -> std::io::Result<()> {
    write_trace_csv_opts(report, w, true)
}

fn write_trace_csv_opts<W: Write>(
    report: &RunReport,
    w: &mut W,
    include_timing: bool,
) -> std::io::Result<()> {
    writeln!(w, "iter,J_oracle,grad_norm_est,step_norm,delta_J,m_k,b_k,wall_ms")?;
    for r in &report.records {
        let j_oracle = r.j_oracle.map(full_precision).unwrap_or_default();
        let delta_j = r.delta_j.map(full_precision).unwrap_or_default();
        let wall = if include_timing {
            r.wall_ms.to_string()
        } else {
            String::new()
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.iter,
            j_oracle,
            full_precision(r.grad_norm_est),
            full_precision(r.step_norm),
            delta_j,
            r.grad_batch,
            r.hess_batch,
            wall
        )?;
    }
    Ok(())
}

/// Renders the run summary as a TOML document. The optional stationarity
/// certificate is included when an enumeration oracle was available.
pub fn summary_toml(report: &RunReport, certificate: Option<&oracle::SospCertificate>) -> String {
    #[derive(Serialize)]
    struct CertOut {
        epsilon: f64,
        rho: f64,
        grad_norm: f64,
        min_eigenvalue: f64,
        grad_margin: f64,
        curvature_margin: f64,
        pass: bool,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        algorithm: &'a Algorithm,
        seed: u64,
        epsilon: f64,
        alpha: f64,
        iters: usize,
        grad_batch: usize,
        hess_batch: usize,
        output_index: usize,
        early_exit: bool,
        total_trajectories: usize,
        theta_out: &'a [f64],
        #[serde(skip_serializing_if = "Option::is_none")]
        sosp_certificate: Option<CertOut>,
        total_wall_ms: u64,
    }
    let summary = Summary {
        algorithm: &report.algorithm,
        seed: report.seed,
        epsilon: report.epsilon,
        alpha: report.alpha,
        iters: report.iters,
        grad_batch: report.grad_batch,
        hess_batch: report.hess_batch,
        output_index: report.output_index,
        early_exit: report.early_exit,
        total_trajectories: report.total_trajectories,
        theta_out: &report.theta_out,
        sosp_certificate: certificate.map(|c| CertOut {
            epsilon: c.epsilon,
            rho: c.rho,
            grad_norm: c.grad_norm,
            min_eigenvalue: c.min_eigenvalue,
            grad_margin: c.grad_margin,
            curvature_margin: c.curvature_margin,
            pass: c.pass,
        }),
        total_wall_ms: report.records.iter().map(|r| r.wall_ms).sum(),
    };
    toml::to_string(&summary).expect("summary serialization cannot fail")
}

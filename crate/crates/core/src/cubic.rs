//! Solvers for the cubic-regularized Newton subproblem
//! `min_delta <g, delta> + 1/2 <H delta, delta> + (alpha/6) ||delta||^3`.
//!
//! [`solve_exact`] computes the global minimizer by eigendecomposition and a
//! safeguarded 1-D root-find on the secular equation
//! `||(H + (alpha/2) r I)^{-1} g|| = r`, including the hard case where `g`
//! has no component on the bottom eigenspace. [`cubic_subsolver`] and
//! [`cubic_finalsolver`] are the gradient-based approximate solvers used by
//! the matrix-free optimization path: a Cauchy-point step when the gradient
//! is large, perturbed gradient descent otherwise, and a high-accuracy
//! descent pass at termination.

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Stream;
use nalgebra::{DMatrix, DVector};

pub const DEFAULT_EXACT_DIM_CAP: usize = 2000;
pub const SECULAR_TOL: f64 = 1e-12;
pub const STATIONARITY_RTOL: f64 = 1e-8;
pub const CURVATURE_TOL: f64 = -1e-8;
pub const DEFAULT_FINALSOLVER_CAP: usize = 1_000_000;

/// Access to the model Hessian: dense, or matrix-free through products.
pub enum HessAccess<'a> {
    Dense(&'a DMatrix<f64>),
    Operator(&'a dyn Fn(&DVector<f64>) -> DVector<f64>),
}

impl HessAccess<'_> {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            HessAccess::Dense(m) => *m * v,
            HessAccess::Operator(f) => f(v),
        }
    }
}

/// The local cubic model around the current iterate.
pub struct CubicModel<'a> {
    pub g: DVector<f64>,
    pub hess: HessAccess<'a>,
    /// Cubic regularization weight (the Hessian-Lipschitz surrogate).
    pub alpha: f64,
    /// Gradient-Lipschitz constant `l`; used only by the approximate path.
    pub lipschitz_l: f64,
}

impl<'a> CubicModel<'a> {
    pub fn new(g: DVector<f64>, hess: HessAccess<'a>, alpha: f64, lipschitz_l: f64) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(Error::InvalidInput(format!("alpha = {alpha} must be positive")));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("gradient has non-finite entries".into()));
        }
        Ok(Self {
            g,
            hess,
            alpha,
            lipschitz_l,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Which routine produced a [`CubicSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Exact,
    SubsolverCauchy,
    SubsolverGd,
    Finalsolver,
}

/// A computed step with optimality certificates.
#[derive(Debug, Clone)]
pub struct CubicSolution {
    pub delta: DVector<f64>,
    pub model_value: f64,
    /// `||g + H delta + (alpha/2)||delta|| delta||`.
    pub stationarity_residual: f64,
    /// `lambda_min(H + (alpha/2)||delta|| I)`.
    pub curvature_margin: f64,
    pub solver_kind: SolverKind,
    /// Smallest eigenvalue of the model Hessian (dense solves only).
    pub hess_min_eig: Option<f64>,
}

/// Evaluates `<g, delta> + 1/2 <H delta, delta> + (alpha/6)||delta||^3`;
/// one Hessian product for functional access.
pub fn model_value(model: &CubicModel, delta: &DVector<f64>) -> Result<f64> {
    model.check_dim(delta)?;
    let h_delta = model.hess.apply(delta);
    Ok(model.g.dot(delta) + 0.5 * h_delta.dot(delta) + model.alpha / 6.0 * delta.norm().powi(3))
}

/// The model gradient `g + H delta + (alpha/2)||delta|| delta`.
fn model_gradient(model: &CubicModel, delta: &DVector<f64>) -> DVector<f64> {
    let mut out = model.hess.apply(delta);
    out += &model.g;
    out.axpy(model.alpha / 2.0 * delta.norm(), delta, 1.0);
    out
}

/// Residual report for a candidate step.
#[derive(Debug, Clone)]
pub struct StepResiduals {
    pub stationarity_residual: f64,
    pub curvature_margin: f64,
}

/// Computes the stationarity residual and curvature margin of `delta`.
/// Dense access uses an exact eigensolve; functional access estimates the
/// smallest eigenvalue iteratively (tolerance 1e-6).
pub fn verify_step(model: &CubicModel, delta: &DVector<f64>) -> Result<StepResiduals> {
    model.check_dim(delta)?;
    let stationarity_residual = model_gradient(model, delta).norm();
    let shift = model.alpha / 2.0 * delta.norm();
    let lambda_min = match &model.hess {
        HessAccess::Dense(m) => linalg::min_eigenpair_symmetric(m, 1e-8)?.0,
        HessAccess::Operator(f) => {
            linalg::min_eigenvalue_operator(model.dim(), |v| f(v), 1e-6, 10 * model.dim() + 50)?
        }
    };
    Ok(StepResiduals {
        stationarity_residual,
        curvature_margin: lambda_min + shift,
    })
}

/// Globally minimizes the cubic model (dense access required).
///
/// In the eigenbasis of `H`, the minimizer has `delta_i = -g_i / (lambda_i +
/// (alpha/2) r)` where the radius `r = ||delta||` solves the secular
/// equation. The root is bracketed on `(max(0, -2 lambda_min / alpha), r_hi]`
/// and polished by a bisection-Newton hybrid; when `g` has no component on
/// the bottom eigenspace and no interior root exists, the boundary radius is
/// reached by adding a bottom-eigenvector component (hard case). Ties are
/// broken toward the bottom eigenvector with positive first nonzero
/// coordinate.
pub fn solve_exact(model: &CubicModel) -> Result<CubicSolution> {
    solve_exact_with_cap(model, DEFAULT_EXACT_DIM_CAP)
}

pub fn solve_exact_with_cap(model: &CubicModel, dim_cap: usize) -> Result<CubicSolution> {
    let dense = match &model.hess {
        HessAccess::Dense(m) => *m,
        HessAccess::Operator(_) => return Err(Error::DenseAccessRequired),
    };
    crate::diag::note_dense_alloc();
    let dim = model.dim();
    if dim > dim_cap {
        return Err(Error::DimCapExceeded { dim, cap: dim_cap });
    }
    if dense.nrows() != dim || dense.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: dense.nrows(),
        });
    }

    let alpha = model.alpha;
    let sym = (dense + dense.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let lambdas = &eig.eigenvalues;
    let q = &eig.eigenvectors;
    let lambda_min = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let g_tilde = q.transpose() * &model.g;
    let g_norm = model.g.norm();

    let r_lo = (-2.0 * lambda_min / alpha).max(0.0);
    let r_hi_bound = (2.0 * g_norm / alpha).sqrt()
        + 2.0 * linalg::operator_norm_symmetric(dense) / alpha;

    // Eigenvalues clustered at the bottom (relevant when lambda_min < 0).
    let bottom: Vec<usize> = if lambda_min < 0.0 {
        (0..dim)
            .filter(|&i| (lambdas[i] - lambda_min).abs() <= 1e-12 * (1.0 + lambda_min.abs()))
            .collect()
    } else {
        Vec::new()
    };
    let g_on_bottom: f64 = bottom.iter().map(|&i| g_tilde[i].powi(2)).sum::<f64>().sqrt();

    // ||delta(r)||: +inf when a relevant denominator is not strictly
    // positive, so bracketing sees the pole cleanly.
    let norm_at = |r: f64| -> f64 {
        let mut sum = 0.0;
        for i in 0..dim {
            let denom = lambdas[i] + alpha / 2.0 * r;
            if g_tilde[i] != 0.0 {
                if denom <= 0.0 {
                    return f64::INFINITY;
                }
                sum += (g_tilde[i] / denom).powi(2);
            }
        }
        sum.sqrt()
    };

    // Assembles the step for a radius; optionally forces the bottom
    // component to reach the boundary norm (hard case).
    let assemble = |r: f64, hard: bool| -> DVector<f64> {
        let mut delta_tilde = DVector::zeros(dim);
        for i in 0..dim {
            if hard && bottom.contains(&i) {
                continue;
            }
            let denom = lambdas[i] + alpha / 2.0 * r;
            if denom.abs() > 1e-300 && g_tilde[i] != 0.0 {
                delta_tilde[i] = -g_tilde[i] / denom;
            }
        }
        if hard {
            let partial = delta_tilde.norm();
            let nu = (r * r - partial * partial).max(0.0).sqrt();
            let mut v: DVector<f64> = q.column(bottom[0]).into();
            linalg::canonicalize_sign(&mut v);
            let mut delta = q * delta_tilde;
            delta.axpy(nu, &v, 1.0);
            delta
        } else {
            q * delta_tilde
        }
    };

    let residual_budget = STATIONARITY_RTOL * g_norm.max(1.0);

    if g_norm == 0.0 && lambda_min >= 0.0 {
        // PSD stationary model: delta = 0.
        return finish_exact(model, DVector::zeros(dim), lambda_min, alpha);
    }

    let exact_hard = lambda_min < 0.0 && g_on_bottom <= 1e-13 * (1.0 + g_norm);
    if exact_hard {
        // Interior root exists only if the reduced solution is long enough
        // at the boundary radius.
        let w_reduced = norm_at_excluding(&g_tilde, lambdas, alpha, r_lo, &bottom);
        if w_reduced < r_lo {
            return finish_exact(model, assemble(r_lo, true), lambda_min, alpha);
        }
    }

    // Regular case: solve ||delta(r)|| = r by safeguarded Newton on the
    // reciprocal form psi(r) = 1/||delta(r)|| - 1/r, which has no pole at
    // the bracket boundary. Terminates on the stationarity residual of the
    // reconstructed step, (alpha/2) |w - r| w.
    match secular_root(
        &norm_at,
        r_lo,
        r_hi_bound.max(r_lo * 1.0001 + 1.0),
        alpha,
        0.1 * residual_budget,
    ) {
        Ok(r) => finish_exact(model, assemble(r, false), lambda_min, alpha),
        Err(stall) => {
            // Root pinned against the pole (near-hard case): the boundary
            // assembly is the correct limit; its residual is |g_on_bottom|.
            let delta = assemble(r_lo, true);
            finish_exact(model, delta, lambda_min, alpha).map_err(|_| stall)
        }
    }
}

fn finish_exact(
    model: &CubicModel,
    delta: DVector<f64>,
    lambda_min: f64,
    alpha: f64,
) -> Result<CubicSolution> {
    let value = model_value(model, &delta)?;
    let residual = model_gradient(model, &delta).norm();
    let margin = lambda_min + alpha / 2.0 * delta.norm();
    let tol = STATIONARITY_RTOL * model.g.norm().max(1.0);
    if residual > tol || margin < CURVATURE_TOL {
        return Err(Error::NumericalFailure(format!(
            "exact cubic step certificates violated: residual {residual:.3e} (tol {tol:.3e}), curvature margin {margin:.3e}"
        )));
    }
    Ok(CubicSolution {
        delta,
        model_value: value,
        stationarity_residual: residual,
        curvature_margin: margin,
        solver_kind: SolverKind::Exact,
        hess_min_eig: Some(lambda_min),
    })
}

fn norm_at_excluding(
    g_tilde: &DVector<f64>,
    lambdas: &DVector<f64>,
    alpha: f64,
    r: f64,
    excluded: &[usize],
) -> f64 {
    let mut sum = 0.0;
    for i in 0..g_tilde.len() {
        if excluded.contains(&i) {
            continue;
        }
        let denom = lambdas[i] + alpha / 2.0 * r;
        if denom.abs() > 0.0 {
            sum += (g_tilde[i] / denom).powi(2);
        }
    }
    sum.sqrt()
}

/// Finds the root of `w(r) = r` on `(lo, hi]`, where `w` is positive and
/// decreasing. Newton iteration on the reciprocal form
/// `psi(r) = 1/w(r) - 1/r` (increasing, nearly linear, finite at the pole),
/// safeguarded by bisection. Terminates when the stationarity residual of
/// the implied step, `(alpha/2) |w(r) - r| w(r)`, drops below
/// `residual_target`, or to machine precision of the bracket otherwise.
fn secular_root(
    w: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    alpha: f64,
    residual_target: f64,
) -> Result<f64> {
    let psi = |r: f64| {
        let wr = w(r);
        if wr.is_infinite() {
            -1.0 / r.max(1e-300)
        } else {
            1.0 / wr.max(1e-300) - 1.0 / r.max(1e-300)
        }
    };
    let residual = |r: f64| {
        let wr = w(r);
        if wr.is_finite() {
            alpha / 2.0 * (wr - r).abs() * wr
        } else {
            f64::INFINITY
        }
    };

    let mut lo = lo;
    let mut hi = hi;
    let mut guard = 0;
    while psi(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::NumericalFailure(
                "secular bracket expansion failed".into(),
            ));
        }
    }

    let mut r = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, r);
    for _ in 0..200 {
        let v = psi(r);
        let res = residual(r);
        if res < best.0 {
            best = (res, r);
        }
        if res <= residual_target || v.abs() <= SECULAR_TOL / r.max(1.0) {
            return Ok(r);
        }
        if v < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
        // Newton proposal on psi via central differencing of 1/w (cheap and
        // robust; w itself may have huge slope near the pole while 1/w is
        // tame). Falls back to bisection outside the bracket.
        let h = 1e-7 * (1.0 + r);
        let dpsi = (psi(r + h) - psi(r - h)) / (2.0 * h);
        let newton = if dpsi.is_finite() && dpsi > 0.0 {
            r - v / dpsi
        } else {
            f64::NAN
        };
        r = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let (best_res, best_r) = best;
    if best_res <= residual_target * 10.0 {
        return Ok(best_r);
    }
    Err(Error::NumericalFailure(format!(
        "secular root-finder stalled at r = {best_r}, certificate residual {best_res:.3e}"
    )))
}

/// Approximate solver branch used per outer iteration.
///
/// If `||g|| >= l^2 / alpha`, takes the Cauchy step along `-g` with radius
/// `R_c = -beta + sqrt(beta^2 + 2||g||/alpha)`, `beta = g^T H g / (alpha ||g||^2)`.
/// Otherwise runs `inner_iters` steps of gradient descent on the model with
/// the gradient perturbed by `sigma zeta`, `sigma = c' sqrt(eps alpha)/l`,
/// `zeta` uniform on the unit sphere, step size `1/(20 l)`.
///
/// Returns the step and `delta_j`, the unperturbed model value at the step.
pub fn cubic_subsolver(
    model: &CubicModel,
    epsilon: f64,
    inner_iters: usize,
    c_prime: f64,
    noise: &mut Stream,
) -> Result<(DVector<f64>, f64, SolverKind)> {
    if model.lipschitz_l <= 0.0 {
        return Err(Error::InvalidInput("lipschitz_l must be positive".into()));
    }
    let rho = model.alpha;
    let l = model.lipschitz_l;
    let g_norm = model.g.norm();

    if g_norm >= l * l / rho {
        let hg = model.hess.apply(&model.g);
        let beta = model.g.dot(&hg) / (rho * g_norm * g_norm);
        let r_c = -beta + (beta * beta + 2.0 * g_norm / rho).sqrt();
        let delta = -(r_c / g_norm) * &model.g;
        let value = model_value(model, &delta)?;
        return Ok((delta, value, SolverKind::SubsolverCauchy));
    }

    let dim = model.dim();
    let sigma = c_prime * (epsilon * rho).sqrt() / l;
    let eta = 1.0 / (20.0 * l);
    let zeta = DVector::from_vec(noise.unit_sphere(dim));
    let g_perturbed = &model.g + sigma * zeta;

    let mut delta = DVector::zeros(dim);
    for _ in 0..inner_iters {
        let mut step = model.hess.apply(&delta);
        step += &g_perturbed;
        step.axpy(rho / 2.0 * delta.norm(), &delta, 1.0);
        delta.axpy(-eta, &step, 1.0);
    }
    let value = model_value(model, &delta)?;
    Ok((delta, value, SolverKind::SubsolverGd))
}

/// High-accuracy gradient descent on the cubic model, maintaining
/// `g_J = g + H delta + (alpha/2)||delta|| delta` and stopping when
/// `||g_J|| < epsilon / 2`.
pub fn cubic_finalsolver(
    model: &CubicModel,
    epsilon: f64,
    max_iters: usize,
) -> Result<DVector<f64>> {
    if model.lipschitz_l <= 0.0 {
        return Err(Error::InvalidInput("lipschitz_l must be positive".into()));
    }
    let eta = 1.0 / (20.0 * model.lipschitz_l);
    let mut delta = DVector::zeros(model.dim());
    let mut g_j = model.g.clone();
    let mut iters = 0usize;
    while g_j.norm() >= epsilon / 2.0 {
        if iters >= max_iters {
            return Err(Error::MaxIterExceeded {
                context: "cubic finalsolver".into(),
                limit: max_iters,
            });
        }
        delta.axpy(-eta, &g_j, 1.0);
        g_j = model_gradient(model, &delta);
        iters += 1;
    }
    Ok(delta)
}

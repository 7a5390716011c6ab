//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with its margin and elapsed time.
//!
//! The tests serialize on a global mutex so wall-clock budgets and the
//! process-wide dense-allocation counter stay meaningful under the default
//! multi-threaded test runner.

use nalgebra::{DMatrix, DVector};
use policy_newton::constants::{compute_constants, schedule_expectation, schedule_highprob};
use policy_newton::cubic::{self, CubicModel, HessAccess};
use policy_newton::diag;
use policy_newton::driver::{run_acrpn, run_crpn, run_reinforce, Mode, Overrides, RunReport};
use policy_newton::estimator::{phi_grad, single_traj_hessian};
use policy_newton::fixtures::{chain2, saddle3};
use policy_newton::linalg::operator_norm_symmetric;
use policy_newton::mdp::{enumerate_trajectories, trajectory_log_prob};
use policy_newton::oracle::{
    exact_derivatives, finite_diff_grad, finite_diff_hess, is_eps_sosp, min_eigenvalue,
};
use policy_newton::policy::{Policy, PolicyParams, TabularSoftmaxPolicy};
use policy_newton::rng::Stream;
use policy_newton::sampler::sample_batch;
use rayon::prelude::*;
use std::sync::Mutex;
use std::time::{Duration, Instant};

static GATE: Mutex<()> = Mutex::new(());

struct Criterion {
    name: &'static str,
    budget: Duration,
    start: Instant,
    _guard: std::sync::MutexGuard<'static, ()>,
}

impl Criterion {
    fn begin(name: &'static str, budget_secs: u64) -> Self {
        let guard = GATE.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        Self {
            name,
            budget: Duration::from_secs(budget_secs),
            start: Instant::now(),
            _guard: guard,
        }
    }

    fn finish(self, pass: bool, detail: String) {
        let elapsed = self.start.elapsed();
        let in_budget = elapsed <= self.budget;
        println!(
            "criterion {:<38} {}  [{:6.2} s / {:3} s]  {}",
            self.name,
            if pass && in_budget { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            self.budget.as_secs(),
            detail
        );
        assert!(pass, "{}: {detail}", self.name);
        assert!(
            in_budget,
            "{}: runtime {elapsed:?} over budget {:?}",
            self.name, self.budget
        );
    }
}

fn chain2_policy() -> TabularSoftmaxPolicy {
    TabularSoftmaxPolicy::new(2, 2)
}

fn random_theta(dim: usize, stream: &mut Stream, span: f64) -> PolicyParams {
    PolicyParams::from_vector(DVector::from_iterator(
        dim,
        (0..dim).map(|_| stream.uniform_in(-span, span)),
    ))
}

fn chain2_constants() -> policy_newton::constants::SmoothnessConstants {
    let m = chain2();
    let b = chain2_policy().bounds();
    compute_constants(m.cost_bound, b.grad_bound, b.hess_bound, b.hess_lipschitz, m.horizon)
        .unwrap()
}

/// 1. Enumeration-exact gradient and Hessian match central finite
///    differences of the value at 20 random parameter vectors.
#[test]
fn criterion_01_gradient_hessian_theorem() {
    let c = Criterion::begin("01 gradient/Hessian vs finite diff", 5);
    let m = chain2();
    let policy = chain2_policy();
    let mut stream = Stream::from_seed(101);
    let mut worst_g = 0.0f64;
    let mut worst_h = 0.0f64;
    for _ in 0..20 {
        let theta = random_theta(4, &mut stream, 5.0);
        let exact = exact_derivatives(&m, &policy, &theta, None).unwrap();
        let fd_g = finite_diff_grad(&m, &policy, &theta, 1e-4, None).unwrap();
        let fd_h = finite_diff_hess(&m, &policy, &theta, 1e-4, None).unwrap();
        worst_g = worst_g.max((&exact.gradient - fd_g).amax());
        worst_h = worst_h.max((&exact.hessian - fd_h).amax());
    }
    let pass = worst_g <= 1e-7 && worst_h <= 1e-5;
    c.finish(pass, format!("max grad err {worst_g:.2e} (tol 1e-7), max hess err {worst_h:.2e} (tol 1e-5)"));
}

/// 2. Probability-weighted sums of the single-trajectory estimators over
///    the enumerated trajectory space equal the exact derivatives.
#[test]
fn criterion_02_estimator_unbiasedness() {
    let c = Criterion::begin("02 estimator unbiasedness", 5);
    let m = chain2();
    let policy = chain2_policy();
    let mut stream = Stream::from_seed(202);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let theta = random_theta(4, &mut stream, 5.0);
        let exact = exact_derivatives(&m, &policy, &theta, None).unwrap();
        let mut g_sum = DVector::zeros(4);
        let mut h_sum = DMatrix::zeros(4, 4);
        for (tau, _) in enumerate_trajectories(&m, None).unwrap() {
            let p = trajectory_log_prob(&m, &policy, &theta, &tau).unwrap().exp();
            g_sum += p * phi_grad(&m, &policy, &theta, &tau);
            h_sum += p * single_traj_hessian(&m, &policy, &theta, &tau);
        }
        worst = worst
            .max((g_sum - &exact.gradient).amax())
            .max((h_sum - &exact.hessian).amax());
    }
    c.finish(worst <= 1e-9, format!("max deviation {worst:.2e} (tol 1e-9)"));
}

/// 3. Almost-sure single-trajectory deviation bounds: zero violations of
///    ||g - grad J|| <= M1 and ||H - hess J|| <= M2 over 10^4 samples at
///    each of 5 random parameter vectors.
#[test]
fn criterion_03_almost_sure_bounds() {
    let c = Criterion::begin("03 almost-sure deviation bounds", 30);
    let m = chain2();
    let policy = chain2_policy();
    let consts = chain2_constants();
    let mut stream = Stream::from_seed(303);
    let mut violations = 0usize;
    let mut worst_g: f64 = f64::NEG_INFINITY;
    let mut worst_h: f64 = f64::NEG_INFINITY;
    for probe in 0..5 {
        let theta = random_theta(4, &mut stream, 3.0);
        let exact = exact_derivatives(&m, &policy, &theta, None).unwrap();
        let batch = sample_batch(&m, &policy, &theta, 10_000, 1000 + probe).unwrap();
        for tau in &batch.trajectories {
            let g_dev = (phi_grad(&m, &policy, &theta, tau) - &exact.gradient).norm();
            let h_dev = operator_norm_symmetric(
                &(single_traj_hessian(&m, &policy, &theta, tau) - &exact.hessian),
            );
            worst_g = worst_g.max(g_dev);
            worst_h = worst_h.max(h_dev);
            if g_dev > consts.m1 || h_dev > consts.m2 {
                violations += 1;
            }
        }
    }
    c.finish(
        violations == 0,
        format!(
            "0 violations required, saw {violations}; max ||g-dev|| {worst_g:.3} vs M1 {:.3}, max ||H-dev|| {worst_h:.3} vs M2 {:.3}",
            consts.m1, consts.m2
        ),
    );
}

/// 4. Objective smoothness: the three Lipschitz inequalities and the cubic
///    Taylor remainder bound hold for 200 random parameter pairs.
#[test]
fn criterion_04_smoothness() {
    let c = Criterion::begin("04 smoothness inequalities", 30);
    let m = chain2();
    let policy = chain2_policy();
    let consts = chain2_constants();
    let mut stream = Stream::from_seed(404);
    let mut violations = 0usize;
    for _ in 0..200 {
        let t1 = random_theta(4, &mut stream, 5.0);
        let t2 = random_theta(4, &mut stream, 5.0);
        let e1 = exact_derivatives(&m, &policy, &t1, None).unwrap();
        let e2 = exact_derivatives(&m, &policy, &t2, None).unwrap();
        let dt = (&t1.theta - &t2.theta).norm();
        let step = &t1.theta - &t2.theta;

        let value_ok = (e1.value - e2.value).abs() <= consts.m_hess * dt;
        let grad_ok = (&e1.gradient - &e2.gradient).norm() <= consts.g_hess * dt;
        let hess_ok =
            operator_norm_symmetric(&(&e1.hessian - &e2.hessian)) <= consts.l_hess * dt;
        let quad = e2.value + e2.gradient.dot(&step) + 0.5 * (&e2.hessian * &step).dot(&step);
        let taylor_ok = (e1.value - quad).abs() <= consts.l_hess / 6.0 * dt.powi(3);
        if !(value_ok && grad_ok && hess_ok && taylor_ok) {
            violations += 1;
        }
    }
    c.finish(violations == 0, format!("{violations} violations over 200 pairs"));
}

/// Grid oracle for a 2-D cubic model over [-5, 5]^2 at 1e-3 resolution.
fn grid_min_2d(g: &DVector<f64>, h: &DMatrix<f64>, alpha: f64) -> f64 {
    let n = 10_001usize;
    let coord = |i: usize| -5.0 + i as f64 * 1e-3;
    (0..n)
        .into_par_iter()
        .map(|ix| {
            let x = coord(ix);
            let gx = g[0] * x + 0.5 * h[(0, 0)] * x * x;
            let hx = g[1] + h[(0, 1)] * x;
            let mut best = f64::INFINITY;
            for iy in 0..n {
                let y = coord(iy);
                let r2 = x * x + y * y;
                let v = gx + y * (hx + 0.5 * h[(1, 1)] * y) + alpha / 6.0 * r2 * r2.sqrt();
                if v < best {
                    best = v;
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// 5. Exact cubic solver: certificates and grid-oracle agreement on 50
///    random 2-D models, plus the three worked instances.
#[test]
fn criterion_05_exact_cubic_solver() {
    let c = Criterion::begin("05 exact cubic solver vs grid", 60);
    let mut stream = Stream::from_seed(505);
    let alphas = [1.0, 3.0, 10.0];
    let mut worst_residual = 0.0f64;
    let mut worst_margin = 0.0f64;
    let mut worst_gap = f64::NEG_INFINITY;
    for trial in 0..50 {
        let g = DVector::from_iterator(2, (0..2).map(|_| stream.uniform_in(-3.0, 3.0)));
        let (a, b, d) = (
            stream.uniform_in(-3.0, 3.0),
            stream.uniform_in(-3.0, 3.0),
            stream.uniform_in(-3.0, 3.0),
        );
        let h = DMatrix::from_row_slice(2, 2, &[a, b, b, d]);
        let alpha = alphas[trial % 3];
        let model = CubicModel::new(g.clone(), HessAccess::Dense(&h), alpha, 1.0).unwrap();
        let sol = cubic::solve_exact(&model).unwrap();
        worst_residual = worst_residual.max(sol.stationarity_residual);
        worst_margin = worst_margin.min(sol.curvature_margin);
        let grid = grid_min_2d(&g, &h, alpha);
        worst_gap = worst_gap.max(sol.model_value - grid);
        // One-sided: the solver may only beat the grid. Within the box the
        // agreement is two-sided at grid resolution.
        assert!(sol.model_value <= grid + 1e-3, "trial {trial}: {} vs grid {grid}", sol.model_value);
        if sol.delta.norm() <= 4.9 {
            assert!((sol.model_value - grid).abs() <= 1e-3);
        }
    }

    // Worked instances.
    let h_psd = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
    let sol = cubic::solve_exact(
        &CubicModel::new(DVector::zeros(2), HessAccess::Dense(&h_psd), 1.0, 1.0).unwrap(),
    )
    .unwrap();
    assert!(sol.delta.norm() <= 1e-5 && sol.model_value.abs() <= 1e-5);

    let h_indef = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]);
    let sol = cubic::solve_exact(
        &CubicModel::new(DVector::zeros(2), HessAccess::Dense(&h_indef), 1.0, 1.0).unwrap(),
    )
    .unwrap();
    assert!((sol.delta[0] - 2.0).abs() <= 1e-5 && sol.delta[1].abs() <= 1e-5);
    assert!((sol.model_value - (-2.0 + 8.0 / 6.0)).abs() <= 1e-5);

    let sol = cubic::solve_exact(
        &CubicModel::new(
            DVector::from_row_slice(&[1.0, 0.0]),
            HessAccess::Dense(&h_psd),
            6.0,
            1.0,
        )
        .unwrap(),
    )
    .unwrap();
    assert!((sol.delta[0] - (-(13f64.sqrt() - 1.0) / 6.0)).abs() <= 1e-5);
    assert!(sol.delta[1].abs() <= 1e-5);

    let pass = worst_residual <= 1e-8 && worst_margin >= -1e-8;
    c.finish(
        pass,
        format!(
            "max residual {worst_residual:.2e} (tol 1e-8), min curvature margin {worst_margin:.2e} (tol -1e-8), max grid gap {worst_gap:.2e}"
        ),
    );
}

fn desk_crpn(seed: u64) -> RunReport {
    run_crpn(
        &chain2(),
        &chain2_policy(),
        &PolicyParams::zeros(4),
        0.3,
        Mode::Expectation,
        seed,
        &Overrides {
            grad_batch: Some(2000),
            hess_batch: Some(2000),
            iters: Some(30),
            ..Default::default()
        },
    )
    .unwrap()
}

/// 6. Every accepted exact step satisfies the per-iteration model-decrease
///    inequality `J_model(step) <= -(alpha/12) ||step||^3`.
#[test]
fn criterion_06_model_decrease() {
    let c = Criterion::begin("06 per-step model decrease", 60);
    let report = desk_crpn(11);
    let mut worst = f64::NEG_INFINITY;
    for r in &report.records {
        let bound = -report.alpha / 12.0 * r.step_norm.powi(3) + 1e-10;
        worst = worst.max(r.delta_j.unwrap() - bound);
    }
    c.finish(
        worst <= 0.0,
        format!("max (model value - bound) over 30 iterations: {worst:.2e}"),
    );
}

/// 7. CR-PN at desk scale reaches the expectation-bound targets
///    `||grad J|| <= 25 eps` and `lambda_min >= -7 sqrt(L_Hess eps)` in at
///    least 4 of 5 seeds, certified by the enumeration oracle.
#[test]
fn criterion_07_crpn_convergence() {
    let c = Criterion::begin("07 CR-PN convergence targets", 120);
    let m = chain2();
    let policy = chain2_policy();
    let consts = chain2_constants();
    let eps = 0.3;
    let mut passes = 0;
    let mut details = Vec::new();
    for seed in 1..=5u64 {
        let report = desk_crpn(seed);
        let exact =
            exact_derivatives(&m, &policy, &report.theta_out_params(), None).unwrap();
        let (lambda, _) = min_eigenvalue(&exact.hessian).unwrap();
        let grad_ok = exact.gradient.norm() <= 25.0 * eps;
        let curv_ok = lambda >= -7.0 * (consts.l_hess * eps).sqrt();
        if grad_ok && curv_ok {
            passes += 1;
        }
        details.push(format!("seed {seed}: |g|={:.3}, lmin={lambda:.3}", exact.gradient.norm()));
    }
    c.finish(passes >= 4, format!("{passes}/5 seeds; {}", details.join("; ")));
}

/// 8. ACR-PN reaches an oracle-certified eps-SOSP in at least 4 of 5 seeds
///    without ever materializing a d x d matrix on the algorithm path.
#[test]
fn criterion_08_acrpn_parity() {
    let c = Criterion::begin("08 ACR-PN parity + matrix-free", 180);
    let m = chain2();
    let policy = chain2_policy();
    let consts = chain2_constants();
    let eps = 0.3f64;
    assert_eq!((1.0 / eps.sqrt()).ceil() as usize, 2); // N_hat = ceil(1/sqrt(eps))
    let overrides = Overrides {
        grad_batch: Some(2000),
        hess_batch: Some(2000),
        iters: Some(2000),
        ..Default::default()
    };
    let mut passes = 0;
    let mut details = Vec::new();
    for seed in 1..=5u64 {
        let before = diag::dense_hessian_allocs();
        let report = run_acrpn(&m, &policy, &PolicyParams::zeros(4), eps, seed, &overrides).unwrap();
        let after = diag::dense_hessian_allocs();
        assert_eq!(
            after - before,
            0,
            "dense d x d allocation on the matrix-free path (seed {seed})"
        );
        let cert = is_eps_sosp(&m, &policy, &report.theta_out_params(), eps, consts.l_hess, None)
            .unwrap();
        if cert.pass {
            passes += 1;
        }
        details.push(format!(
            "seed {seed}: |g|={:.3}, lmin={:.2e}, exit@{}",
            cert.grad_norm, cert.min_eigenvalue, report.output_index
        ));
    }
    c.finish(passes >= 4, format!("{passes}/5 seeds; {}", details.join("; ")));
}

/// 9. Saddle escape on the builtin saddle fixture: the negative-curvature
///    step lower bound holds, the curvature at the output improves by at
///    least 0.02 for CR-PN, and the gradient baseline fails that margin on
///    the same trajectory budget.
#[test]
fn criterion_09_saddle_escape() {
    let c = Criterion::begin("09 saddle escape vs baseline", 180);
    let m = saddle3();
    let policy = TabularSoftmaxPolicy::new(3, 2);
    let theta0 = PolicyParams::zeros(6);

    // Fixture certificate: near-zero gradient, strictly negative curvature.
    let at0 = exact_derivatives(&m, &policy, &theta0, None).unwrap();
    let (lambda0, _) = min_eigenvalue(&at0.hessian).unwrap();
    assert!(at0.gradient.norm() < 1e-3, "saddle gradient {}", at0.gradient.norm());
    assert!(lambda0 < -0.05, "saddle curvature {lambda0}");

    let alpha = 6.0;
    let iters = 25;
    let batch = 3000;
    let overrides = Overrides {
        grad_batch: Some(batch),
        hess_batch: Some(batch),
        iters: Some(iters),
        alpha: Some(alpha),
        ..Default::default()
    };
    let step_floor = 2.0 * 0.05 / alpha - 1e-6;

    let mut newton_passes = 0;
    let mut baseline_failures = 0;
    let mut details = Vec::new();
    for seed in 1..=5u64 {
        let report = run_crpn(&m, &policy, &theta0, 0.3, Mode::Expectation, seed, &overrides)
            .unwrap();

        // Negative-curvature step lower bound, per iteration.
        let mut negative_curvature_seen = false;
        for r in &report.records {
            if r.hess_min_eig.unwrap() < -0.05 {
                assert!(
                    r.step_norm >= step_floor,
                    "seed {seed} iter {}: step {} below floor {step_floor}",
                    r.iter,
                    r.step_norm
                );
                if r.iter <= 5 {
                    negative_curvature_seen = true;
                }
            }
        }
        if negative_curvature_seen {
            let theta5 = DVector::from_vec(report.iterates[4].clone());
            let moved = (theta5 - &theta0.theta).norm();
            assert!(
                moved >= step_floor,
                "seed {seed}: ||theta_5 - theta_0|| = {moved} below {step_floor}"
            );
        }

        let exact =
            exact_derivatives(&m, &policy, &report.theta_out_params(), None).unwrap();
        let (lambda_r, _) = min_eigenvalue(&exact.hessian).unwrap();
        if lambda_r > lambda0 + 0.02 {
            newton_passes += 1;
        }

        let rf = run_reinforce(&m, &policy, &theta0, 0.1, iters, batch, seed).unwrap();
        let exact_rf = exact_derivatives(&m, &policy, &rf.theta_out_params(), None).unwrap();
        let (lambda_rf, _) = min_eigenvalue(&exact_rf.hessian).unwrap();
        if lambda_rf <= lambda0 + 0.02 {
            baseline_failures += 1;
        }
        details.push(format!("seed {seed}: newton lmin {lambda_r:.3}, baseline lmin {lambda_rf:.3}"));
    }
    let pass = newton_passes >= 4 && baseline_failures >= 4;
    c.finish(
        pass,
        format!(
            "newton improved curvature in {newton_passes}/5, baseline failed margin in {baseline_failures}/5 (lambda0 = {lambda0:.4}); {}",
            details.join("; ")
        ),
    );
}

/// 10. Schedules reproduce the published formulas exactly on 100 random
///     tuples, and the worked numeric examples match.
#[test]
fn criterion_10_schedules() {
    let c = Criterion::begin("10 schedule formulas", 1);
    let mut stream = Stream::from_seed(1010);
    for _ in 0..100 {
        let k = stream.uniform_in(0.1, 5.0);
        let g = stream.uniform_in(0.1, 3.0);
        let l1 = stream.uniform_in(0.1, 3.0);
        let l2 = stream.uniform_in(0.1, 3.0);
        let h = 1 + (stream.uniform() * 6.0) as usize;
        let eps = stream.uniform_in(0.01, 0.9);
        let dp = stream.uniform_in(0.001, 0.5);
        let dim = 1 + (stream.uniform() * 50.0) as usize;

        let consts = compute_constants(k, g, l1, l2, h).unwrap();
        // Independent re-derivation of the constants.
        let hf = h as f64;
        assert_eq!(consts.g_g, g * k * hf * hf);
        assert_eq!(consts.m_hess, k * g * hf * hf * hf);
        assert_eq!(consts.g_hess, hf * hf * hf * g * g * k + l1 * k * hf * hf);
        assert_eq!(
            consts.l_hess,
            hf * hf * hf * hf * g * g * g * k + 3.0 * hf * hf * hf * g * l1 * k + l2 * k * hf * hf
        );
        assert_eq!(consts.m1, g * k * hf * hf * (hf + 1.0));
        assert_eq!(consts.m2, 2.0 * consts.g_hess);

        let s = schedule_expectation(&consts, eps, dim).unwrap();
        assert_eq!(s.alpha, 3.0 * consts.l_hess);
        let m_expected = (25.0 * consts.g_g * consts.g_g / (4.0 * eps * eps)).ceil() as usize;
        assert_eq!(s.grad_batch, m_expected.max(1));
        let d = dim as f64;
        let b_expected = (36.0 * (30.0 * (1.0 + 2.0 * (2.0 * d).ln())).cbrt()
            * d.powf(2.0 / 3.0)
            * consts.g_hess
            * consts.g_hess
            / eps)
            .ceil() as usize;
        assert_eq!(s.hess_batch, b_expected.max(1));
        let n_expected =
            (24.0 * k * hf * consts.l_hess.sqrt() / eps.powf(1.5)).ceil() as usize;
        assert_eq!(s.iters, n_expected.max(1));

        let hp = schedule_highprob(&consts, eps, dp, dim).unwrap();
        let t = 2.0 * eps / 5.0;
        let t1 = eps / 144.0;
        let log_term = 8.0 / 3.0 * (2.0 * d / dp).ln();
        let rg = consts.m1 / t;
        assert_eq!(hp.grad_batch, ((rg.max(rg * rg) * log_term).ceil() as usize).max(1));
        let rh = consts.m2 / t1.sqrt();
        assert_eq!(hp.hess_batch, ((rh.max(rh * rh) * log_term).ceil() as usize).max(1));
        match hp.mode {
            policy_newton::constants::ScheduleMode::HighProbability {
                delta_prime,
                t: ht,
                t1: ht1,
                failure_budget,
            } => {
                assert_eq!((delta_prime, ht, ht1), (dp, t, t1));
                assert_eq!(failure_budget, 2.0 * hp.iters as f64 * dp);
            }
            _ => panic!("wrong mode"),
        }
    }

    // Worked numeric examples.
    let c44 = compute_constants(1.0, 1.0, 1.0, 1.0, 2).unwrap();
    assert_eq!(
        (c44.g_g, c44.m_hess, c44.g_hess, c44.l_hess, c44.m1, c44.m2),
        (4.0, 8.0, 12.0, 44.0, 12.0, 24.0)
    );
    let s = schedule_expectation(&c44, 0.1, 4).unwrap();
    assert_eq!((s.alpha, s.grad_batch, s.iters), (132.0, 10_000, 10_069));
    let hp = schedule_highprob(&c44, 0.1, 0.01, 4).unwrap();
    assert_eq!(hp.grad_batch, 1_604_307);

    c.finish(true, "100 random tuples + worked examples reproduced exactly".into());
}

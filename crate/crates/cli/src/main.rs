//! Command-line front end for the policy Newton optimizers.
//!
//! Subcommands:
//! - `run`: execute crpn / acrpn / reinforce from a config file, writing a
//!   trace CSV and a summary TOML.
//! - `check`: run the estimator/oracle cross-check suite on a fixture.
//! - `solve-cubic`: solve one cubic model read from text files.
//! - `schedule`: print the batch/step schedule for given constants.
//!
//! Exit codes: 0 success, 1 failed check, 2 config error, 3 numerical
//! failure.

mod checks;
mod config;

use clap::{Args, Parser, Subcommand};
use config::{AlgorithmKind, RunConfig};
use nalgebra::{DMatrix, DVector};
use policy_newton::constants::{compute_constants, schedule_expectation, schedule_highprob};
use policy_newton::cubic::{self, CubicModel, HessAccess};
use policy_newton::driver::{self, RunReport};
use policy_newton::error::Error;
use policy_newton::fixtures::load_fixture;
use policy_newton::oracle;
use policy_newton::policy::{Policy, PolicyBounds, PolicyParams, TabularSoftmaxPolicy};
use policy_newton::rng::Stream;
use std::path::PathBuf;
use std::process::ExitCode;

const OUT_DIR_ENV: &str = "POLICY_NEWTON_OUT_DIR";

#[derive(Parser)]
#[command(name = "policy-newton", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an optimization algorithm from a config file.
    Run(RunArgs),
    /// Run the estimator/oracle cross-check suite.
    Check(CheckArgs),
    /// Solve a single cubic-regularized model from g/H files.
    SolveCubic(SolveCubicArgs),
    /// Print the batch/step schedule for given constants.
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Rayon thread count (0 = default). Outputs do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory for trace/summary files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Path to the run configuration (TOML); algorithm may be `check`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fixture name or path (alternative to --config).
    #[arg(long)]
    fixture: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct SolveCubicArgs {
    /// Text file holding the gradient vector (whitespace-separated).
    #[arg(long)]
    g_file: PathBuf,
    /// Text file holding the symmetric Hessian, one row per line.
    #[arg(long)]
    h_file: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// exact | subsolver | finalsolver
    #[arg(long, default_value = "exact")]
    method: String,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Gradient-Lipschitz constant for the approximate methods.
    #[arg(long, default_value_t = 1.0)]
    lipschitz: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    cost_bound: f64,
    #[arg(long)]
    grad_bound: f64,
    #[arg(long)]
    hess_bound: f64,
    #[arg(long)]
    hess_lipschitz: f64,
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    dim: usize,
    /// expectation | high-probability
    #[arg(long, default_value = "expectation")]
    mode: String,
    #[arg(long)]
    delta_prime: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
        Command::SolveCubic(args) => cmd_solve_cubic(args),
        Command::Schedule(args) => cmd_schedule(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::NumericalFailure(_) | Error::MaxIterExceeded { .. } => 3,
        _ => 2,
    }
}

fn install_threads(threads: usize) {
    if threads > 0 {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn make_policy(mdp: &policy_newton::mdp::FiniteMdp, config: &RunConfig) -> TabularSoftmaxPolicy {
    match config.policy_bounds {
        Some(b) => TabularSoftmaxPolicy::with_bounds(
            mdp.num_states,
            mdp.num_actions,
            PolicyBounds {
                grad_bound: b.grad_bound,
                hess_bound: b.hess_bound,
                hess_lipschitz: b.hess_lipschitz,
            },
        ),
        None => TabularSoftmaxPolicy::new(mdp.num_states, mdp.num_actions),
    }
}

fn theta0_from(config: &RunConfig, dim: usize) -> Result<PolicyParams, Error> {
    match &config.theta0 {
        Some(values) => {
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: values.len(),
                });
            }
            PolicyParams::new(values.clone())
        }
        None => Ok(PolicyParams::zeros(dim)),
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Error> {
    install_threads(args.threads);
    let config = RunConfig::load(&args.config)?;
    let mdp = load_fixture(&config.fixture)?;
    let policy = make_policy(&mdp, &config);
    let theta0 = theta0_from(&config, policy.dim())?;
    let seed = args.seed.unwrap_or(config.seed);
    let overrides = config.driver_overrides();

    let report: RunReport = match config.algorithm {
        AlgorithmKind::Crpn => driver::run_crpn(
            &mdp,
            &policy,
            &theta0,
            config.epsilon,
            config.driver_mode(),
            seed,
            &overrides,
        )?,
        AlgorithmKind::Acrpn => {
            driver::run_acrpn(&mdp, &policy, &theta0, config.epsilon, seed, &overrides)?
        }
        AlgorithmKind::Reinforce => driver::run_reinforce(
            &mdp,
            &policy,
            &theta0,
            config.step_size.unwrap_or(0.1),
            overrides.iters.unwrap_or(50),
            overrides.grad_batch.unwrap_or(1000),
            seed,
        )?,
        AlgorithmKind::Check => {
            return cmd_check(CheckArgs {
                config: Some(args.config.clone()),
                fixture: None,
                seed: Some(seed),
                threads: 0,
            })
        }
    };

    // Stationarity certificate at the output, when the oracle is available.
    let certificate = oracle::is_eps_sosp(
        &mdp,
        &policy,
        &report.theta_out_params(),
        config.epsilon,
        report.constants.l_hess,
        None,
    )
    .ok();

    let dir = out_dir(args.out_dir);
    std::fs::create_dir_all(&dir)?;
    let trace_path = dir.join(config.trace_path.as_deref().unwrap_or("trace.csv"));
    let summary_path = dir.join(config.summary_path.as_deref().unwrap_or("summary.toml"));

    let mut trace = Vec::new();
    driver::write_trace_csv(&report, &mut trace)?;
    std::fs::write(&trace_path, trace)?;
    std::fs::write(&summary_path, driver::summary_toml(&report, certificate.as_ref()))?;

    println!(
        "{:?} finished: R = {}, total trajectories = {}, trace = {}, summary = {}",
        report.algorithm,
        report.output_index,
        report.total_trajectories,
        trace_path.display(),
        summary_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode, Error> {
    install_threads(args.threads);
    let (mdp, policy, seed) = if let Some(path) = &args.config {
        let config = RunConfig::load(path)?;
        let mdp = load_fixture(&config.fixture)?;
        let policy = make_policy(&mdp, &config);
        (mdp, policy, args.seed.unwrap_or(config.seed))
    } else {
        let fixture = args.fixture.as_deref().unwrap_or("chain2");
        let mdp = load_fixture(fixture)?;
        let policy = TabularSoftmaxPolicy::new(mdp.num_states, mdp.num_actions);
        (mdp, policy, args.seed.unwrap_or(0))
    };

    match checks::run_checks(&mdp, &policy, seed) {
        Ok(outcomes) => {
            for o in &outcomes {
                println!(
                    "{:<32} {}  margin {:+.3e}",
                    o.name,
                    if o.pass { "PASS" } else { "FAIL" },
                    o.margin
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            // Validation problems are config errors; bound/identity
            // violations are check failures (exit 1).
            match &e {
                Error::InvalidMdp(_) | Error::CapExceeded { .. } => Err(e),
                _ => {
                    eprintln!("check failed: {e}");
                    Ok(ExitCode::from(1))
                }
            }
        }
    }
}

fn parse_vector(path: &PathBuf) -> Result<DVector<f64>, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let values: Result<Vec<f64>, _> = text.split_whitespace().map(str::parse::<f64>).collect();
    let values = values.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if values.is_empty() {
        return Err(Error::Parse(format!("{}: empty vector", path.display())));
    }
    Ok(DVector::from_vec(values))
}

fn parse_matrix(path: &PathBuf) -> Result<DMatrix<f64>, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse(format!(
            "{}: expected a square matrix",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn cmd_solve_cubic(args: SolveCubicArgs) -> Result<ExitCode, Error> {
    let g = parse_vector(&args.g_file)?;
    let h = parse_matrix(&args.h_file)?;
    if h.nrows() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: h.nrows(),
        });
    }
    let model = CubicModel::new(g, HessAccess::Dense(&h), args.alpha, args.lipschitz)?;

    let delta = match args.method.as_str() {
        "exact" => {
            let sol = cubic::solve_exact(&model)?;
            println!("method            exact");
            println!("delta             {:?}", sol.delta.as_slice());
            println!("model_value       {:.12e}", sol.model_value);
            println!("stationarity      {:.3e}", sol.stationarity_residual);
            println!("curvature_margin  {:+.3e}", sol.curvature_margin);
            return Ok(ExitCode::SUCCESS);
        }
        "subsolver" => {
            let inner = (1.0 / args.epsilon.sqrt()).ceil() as usize;
            let mut noise = Stream::substream(args.seed, 0);
            let (delta, dj, kind) =
                cubic::cubic_subsolver(&model, args.epsilon, inner, 0.1, &mut noise)?;
            println!("method            subsolver ({kind:?})");
            println!("delta_J           {dj:.12e}");
            delta
        }
        "finalsolver" => {
            println!("method            finalsolver");
            cubic::cubic_finalsolver(&model, args.epsilon, cubic::DEFAULT_FINALSOLVER_CAP)?
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown method {other:?} (exact | subsolver | finalsolver)"
            )))
        }
    };
    let value = cubic::model_value(&model, &delta)?;
    let residuals = cubic::verify_step(&model, &delta)?;
    println!("delta             {:?}", delta.as_slice());
    println!("model_value       {value:.12e}");
    println!("stationarity      {:.3e}", residuals.stationarity_residual);
    println!("curvature_margin  {:+.3e}", residuals.curvature_margin);
    Ok(ExitCode::SUCCESS)
}

fn cmd_schedule(args: ScheduleArgs) -> Result<ExitCode, Error> {
    let consts = compute_constants(
        args.cost_bound,
        args.grad_bound,
        args.hess_bound,
        args.hess_lipschitz,
        args.horizon,
    )?;
    println!(
        "constants: G_g = {:.6e}, M_Hess = {:.6e}, G_Hess = {:.6e}, L_Hess = {:.6e}, M1 = {:.6e}, M2 = {:.6e}",
        consts.g_g, consts.m_hess, consts.g_hess, consts.l_hess, consts.m1, consts.m2
    );
    let schedule = match args.mode.as_str() {
        "expectation" => schedule_expectation(&consts, args.epsilon, args.dim)?,
        "high-probability" => {
            let dp = args.delta_prime.ok_or_else(|| {
                Error::InvalidInput("high-probability mode requires --delta-prime".into())
            })?;
            schedule_highprob(&consts, args.epsilon, dp, args.dim)?
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown mode {other:?} (expectation | high-probability)"
            )))
        }
    };
    println!(
        "schedule: alpha_k = {:.6e}, N = {}, m_k = {}, b_k = {} (floor {})",
        schedule.alpha, schedule.iters, schedule.grad_batch, schedule.hess_batch,
        schedule.hess_batch_floor
    );
    if let policy_newton::constants::ScheduleMode::HighProbability {
        delta_prime,
        t,
        t1,
        failure_budget,
    } = schedule.mode
    {
        println!(
            "high-probability: delta' = {delta_prime}, t = {t:.6e}, t1 = {t1:.6e}, failure budget 2N*delta' = {failure_budget:.3}"
        );
    }
    Ok(ExitCode::SUCCESS)
}

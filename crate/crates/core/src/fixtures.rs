//! Builtin MDP fixtures and the on-disk fixture format.
//!
//! Fixture files are TOML documents with keys `num_states`, `num_actions`,
//! `horizon`, `discount`, `cost_bound`, `transition` (flattened row-major
//! S*A*S), `cost` (S*A) and `initial_dist` (S). Loading then saving
//! round-trips every value bit-exactly.

use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Two-state chain: action 0 keeps the state, action 1 flips it; every step
/// spent in state 0 costs 1. `S=2, A=2, H=2, gamma=1, rho=(1,0), K=1`.
pub fn chain2() -> FiniteMdp {
    FiniteMdp::new(
        2,
        2,
        vec![
            // from s=0: a=0 keeps, a=1 flips
            1.0, 0.0, 0.0, 1.0, // from s=1
            0.0, 1.0, 1.0, 0.0,
        ],
        vec![1.0, 1.0, 0.0, 0.0],
        1.0,
        1.0,
        vec![1.0, 0.0],
        2,
    )
    .expect("builtin fixture must validate")
}

/// Three-state fixture whose uniform policy (`theta = 0`) sits on a strict
/// saddle of the expected cost.
///
/// Construction: from every state, action `a` moves deterministically to
/// state `1 + a`; over horizon 3 the two leaf blocks are each consulted
/// twice (once with future costs, once without), and the costs are balanced
/// so all first-order terms cancel at the uniform policy while the
/// visitation coupling between blocks leaves indefinite curvature
/// (`lambda_min = -sqrt(3)/8` exactly, certified by the enumeration oracle
/// in the test suite).
pub fn saddle3() -> FiniteMdp {
    FiniteMdp::new(
        3,
        2,
        vec![
            // from s=0: a=0 -> 1, a=1 -> 2
            0.0, 1.0, 0.0, 0.0, 0.0, 1.0, // from s=1: same rule
            0.0, 1.0, 0.0, 0.0, 0.0, 1.0, // from s=2: same rule
            0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ],
        vec![
            1.0, -1.0, // state 0
            -0.5, -1.5, // state 1
            1.5, 0.5, // state 2
        ],
        1.5,
        1.0,
        vec![1.0, 0.0, 0.0],
        3,
    )
    .expect("builtin fixture must validate")
}

/// Returns a builtin fixture by name, if any.
pub fn builtin(name: &str) -> Option<FiniteMdp> {
    match name {
        "chain2" => Some(chain2()),
        "saddle3" => Some(saddle3()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: &[&str] = &["chain2", "saddle3"];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    discount: f64,
    cost_bound: f64,
    transition: Vec<f64>,
    cost: Vec<f64>,
    initial_dist: Vec<f64>,
}

/// Parses and validates a fixture document.
pub fn fixture_from_toml(text: &str) -> Result<FiniteMdp> {
    let f: FixtureFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    FiniteMdp::new(
        f.num_states,
        f.num_actions,
        f.transition,
        f.cost,
        f.cost_bound,
        f.discount,
        f.initial_dist,
        f.horizon,
    )
}

/// Serializes an MDP as a fixture document.
pub fn fixture_to_toml(mdp: &FiniteMdp) -> String {
    let f = FixtureFile {
        num_states: mdp.num_states,
        num_actions: mdp.num_actions,
        horizon: mdp.horizon,
        discount: mdp.discount,
        cost_bound: mdp.cost_bound,
        transition: mdp.transition.clone(),
        cost: mdp.cost.clone(),
        initial_dist: mdp.initial_dist.clone(),
    };
    toml::to_string(&f).expect("fixture serialization cannot fail")
}

/// Loads a fixture from disk; `name_or_path` may also be a builtin name.
pub fn load_fixture(name_or_path: &str) -> Result<FiniteMdp> {
    if let Some(m) = builtin(name_or_path) {
        return Ok(m);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "fixture not found: {name_or_path} (builtins: {})",
            BUILTIN_NAMES.join(", ")
        )));
    }
    fixture_from_toml(&std::fs::read_to_string(path)?)
}

pub fn save_fixture(mdp: &FiniteMdp, path: &Path) -> Result<()> {
    std::fs::write(path, fixture_to_toml(mdp))?;
    Ok(())
}

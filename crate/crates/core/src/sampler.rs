//! Seeded Monte Carlo trajectory simulation.
//!
//! Trajectory `i` of a batch is a pure function of `(master_seed, i, mdp,
//! policy, theta)`: each trajectory draws from its own counter-derived
//! substream, results are written to index-addressed slots, so batches are
//! byte-identical across runs, batch sizes (prefix property) and thread
//! counts.

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, Trajectory};
use crate::policy::{Policy, PolicyParams};
use crate::rng::Stream;
use rayon::prelude::*;

/// A batch of sampled trajectories plus the inputs that generated it.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub trajectories: Vec<Trajectory>,
    pub master_seed: u64,
    pub theta_snapshot: PolicyParams,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Simulates one trajectory: `s_0 ~ rho`, `a_h ~ pi(.|s_h)`, `s_{h+1} ~ P`.
pub fn sample_trajectory<P: Policy>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    stream: &mut Stream,
) -> Trajectory {
    let mut states = Vec::with_capacity(mdp.horizon + 1);
    let mut actions = Vec::with_capacity(mdp.horizon);

    let mut s = draw_categorical(stream, &mdp.initial_dist);
    states.push(s);
    for _ in 0..mdp.horizon {
        let a = policy.sample_action(theta, s, stream.uniform());
        let row_start = (s * mdp.num_actions + a) * mdp.num_states;
        let s_next = draw_categorical(stream, &mdp.transition[row_start..row_start + mdp.num_states]);
        actions.push(a);
        states.push(s_next);
        s = s_next;
    }
    Trajectory { states, actions }
}

fn draw_categorical(stream: &mut Stream, probs: &[f64]) -> usize {
    let u = stream.uniform();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Remainder bucket: rightmost index with nonzero probability.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Samples `n` trajectories; trajectory `i` uses substream
/// `(master_seed, i)`, so a batch of size `n` is a prefix of any larger batch
/// with the same seed.
pub fn sample_batch<P: Policy + Sync>(
    mdp: &FiniteMdp,
    policy: &P,
    theta: &PolicyParams,
    n: usize,
    master_seed: u64,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidCount("batch size must be at least 1".into()));
    }
    policy.check_theta(theta)?;
    let trajectories: Vec<Trajectory> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = Stream::substream(master_seed, i as u64);
            sample_trajectory(mdp, policy, theta, &mut stream)
        })
        .collect();
    Ok(SampleBatch {
        trajectories,
        master_seed,
        theta_snapshot: theta.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::chain2;
    use crate::mdp::{enumerate_trajectories, trajectory_log_prob};
    use crate::policy::TabularSoftmaxPolicy;
    use std::collections::HashMap;

    #[test]
    fn deterministic_mdp_and_policy_give_unique_trajectory() {
        let m = chain2();
        let policy = TabularSoftmaxPolicy::new(2, 2);
        let theta = PolicyParams::new(vec![50.0, -50.0, 50.0, -50.0]).unwrap();
        for seed in [0u64, 1, 99] {
            let mut stream = Stream::substream(seed, 0);
            let tau = sample_trajectory(&m, &policy, &theta, &mut stream);
            assert_eq!(tau.states, vec![0, 0, 0]);
            assert_eq!(tau.actions, vec![0, 0]);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = chain2();
        let policy = TabularSoftmaxPolicy::new(2, 2);
        let theta = PolicyParams::zeros(4);
        let a = sample_trajectory(&m, &policy, &theta, &mut Stream::substream(7, 3));
        let b = sample_trajectory(&m, &policy, &theta, &mut Stream::substream(7, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn batch_prefix_property() {
        let m = chain2();
        let policy = TabularSoftmaxPolicy::new(2, 2);
        let theta = PolicyParams::zeros(4);
        let b10 = sample_batch(&m, &policy, &theta, 10, 5).unwrap();
        let b20 = sample_batch(&m, &policy, &theta, 20, 5).unwrap();
        assert_eq!(&b10.trajectories[..], &b20.trajectories[..10]);
        assert_eq!(
            b10.trajectories[0],
            sample_trajectory(&m, &policy, &theta, &mut Stream::substream(5, 0))
        );
    }

    #[test]
    fn zero_count_rejected() {
        let m = chain2();
        let policy = TabularSoftmaxPolicy::new(2, 2);
        let theta = PolicyParams::zeros(4);
        assert!(matches!(
            sample_batch(&m, &policy, &theta, 0, 5),
            Err(Error::InvalidCount(_))
        ));
    }

    #[test]
    fn different_seeds_differ() {
        let m = chain2();
        let policy = TabularSoftmaxPolicy::new(2, 2);
        let theta = PolicyParams::zeros(4);
        let a = sample_batch(&m, &policy, &theta, 100, 1).unwrap();
        let b = sample_batch(&m, &policy, &theta, 100, 2).unwrap();
        assert_ne!(a.trajectories, b.trajectories);
    }

    #[test]
    fn batches_identical_across_thread_counts() {
        let m = chain2();
        let policy = TabularSoftmaxPolicy::new(2, 2);
        let theta = PolicyParams::new(vec![0.2, -0.4, 0.7, 0.0]).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| sample_batch(&m, &policy, &theta, 500, 11).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.trajectories, four.trajectories);
    }

    #[test]
    fn chain2_uniform_frequencies_match_exact_probabilities() {
        let m = chain2();
        let policy = TabularSoftmaxPolicy::new(2, 2);
        let theta = PolicyParams::zeros(4);
        let n = 100_000usize;
        let batch = sample_batch(&m, &policy, &theta, n, 7).unwrap();

        let mut counts: HashMap<Trajectory, usize> = HashMap::new();
        for tau in &batch.trajectories {
            *counts.entry(tau.clone()).or_default() += 1;
        }

        // Exact probabilities from the enumeration oracle (1/4 each).
        let mut chi2 = 0.0;
        let mut tv = 0.0;
        let mut expected_total = 0;
        for (tau, _) in enumerate_trajectories(&m, None).unwrap() {
            let p = trajectory_log_prob(&m, &policy, &theta, &tau).unwrap().exp();
            let expected = p * n as f64;
            let observed = *counts.get(&tau).unwrap_or(&0) as f64;
            chi2 += (observed - expected).powi(2) / expected;
            tv += (observed / n as f64 - p).abs();
            expected_total += 1;
        }
        assert_eq!(expected_total, 4);
        // chi^2_{0.999, 3} = 16.266: p-value > 0.001.
        assert!(chi2 < 16.266, "chi2 = {chi2}");
        assert!(tv / 2.0 < 0.01, "tv = {tv}");
    }
}

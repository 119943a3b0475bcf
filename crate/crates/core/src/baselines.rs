//! Comparators: uniform exploration for bandits, uniform sampling with a
//! simulator followed by plug-in DP, and the explorer with clipping disabled.

use rand::Rng;

use crate::counts::{EmpiricalTransition, VisitCounts};
use crate::dp::{argmax, backward_induction};
use crate::error::{Error, Result};
use crate::explore::{explore, ExplorationConfig, ExplorationLog};
use crate::mdp::{DeterministicPolicy, History, RewardFn, TabularMdp};

/// Bernoulli arms with the given means.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliBandit {
    means: Vec<f64>,
}

impl BernoulliBandit {
    pub fn new(means: Vec<f64>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::InfeasibleParams("bandit needs at least one arm".to_string()));
        }
        if let Some(bad) = means.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::InfeasibleParams(format!("arm mean {bad} outside [0, 1]")));
        }
        Ok(Self { means })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn arms(&self) -> usize {
        self.means.len()
    }

    pub fn pull<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64 {
        if rng.gen::<f64>() < self.means[arm] {
            1.0
        } else {
            0.0
        }
    }

    pub fn best_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformExploreOutcome {
    pub arm: usize,
    pub pulls_per_arm: usize,
    pub empirical_means: Vec<f64>,
}

/// Pulls every arm `⌊T/A⌋` times, then picks the best empirical mean.
pub fn mab_uniform_explore<R: Rng + ?Sized>(
    bandit: &BernoulliBandit,
    budget: usize,
    rng: &mut R,
) -> Result<UniformExploreOutcome> {
    let arms = bandit.arms();
    if budget < arms {
        return Err(Error::InfeasibleParams(format!(
            "budget {budget} is smaller than the {arms} arms"
        )));
    }
    let pulls = budget / arms;
    let empirical_means: Vec<f64> = (0..arms)
        .map(|arm| (0..pulls).map(|_| bandit.pull(arm, rng)).sum::<f64>() / pulls as f64)
        .collect();
    Ok(UniformExploreOutcome {
        arm: argmax(&empirical_means),
        pulls_per_arm: pulls,
        empirical_means,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatorOutcome {
    pub policy: DeterministicPolicy,
    pub p_hat: EmpiricalTransition,
}

/// Draws `samples_per_pair` next states at every `(x, a)`, fits `P̂` and
/// returns the greedy policy of exact DP on `P̂`.
pub fn simulator_uniform<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    reward: &RewardFn,
    samples_per_pair: usize,
    rng: &mut R,
) -> Result<SimulatorOutcome> {
    if samples_per_pair == 0 {
        return Err(Error::InfeasibleParams("need at least one sample per pair".to_string()));
    }
    mdp.check_reward(reward)?;
    let mut counts = VisitCounts::new(mdp.num_states(), mdp.num_actions());
    for x in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            for _ in 0..samples_per_pair {
                counts.record(x, a, mdp.sample_next(x, a, rng));
            }
        }
    }
    let p_hat = counts.empirical_transition();
    let values = backward_induction(&p_hat, mdp.horizon(), |h, x, a| reward.get(h, x, a), None, None);
    Ok(SimulatorOutcome {
        policy: values.greedy_policy(),
        p_hat,
    })
}

/// `T* = ⌈(2 H⁴ S A / ρ²) · log(2 H S A / δ)⌉`, the total simulator budget
/// after which plug-in planning is exactly optimal w.p. `1 − δ`.
pub fn simulator_sample_bound(horizon: usize, states: usize, actions: usize, rho: f64, delta: f64) -> u64 {
    let (h, s, a) = (horizon as f64, states as f64, actions as f64);
    (2.0 * h.powi(4) * s * a / (rho * rho) * (2.0 * h * s * a / delta).ln()).ceil() as u64
}

/// The explorer with the clip threshold at zero.
pub fn unclipped_explore(mdp: &TabularMdp, cfg: &ExplorationConfig) -> Result<(History, ExplorationLog)> {
    let cfg = ExplorationConfig {
        clipped: false,
        ..cfg.clone()
    };
    explore(mdp, &cfg)
}

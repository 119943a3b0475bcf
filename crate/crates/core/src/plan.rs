//! Optimistic planning on a collected history for a revealed reward.
//!
//! For each episode index `k` the planner rebuilds `N^k` and `P̂^k` from the
//! first `k − 1` trajectories, adds a Hoeffding bonus to the reward, solves
//! the capped DP and keeps the greedy policy `π^k`. The returned policy is the
//! uniform mixture of the `π^k`.
//!
//! Planning never looks at the true MDP. [`evaluate`] is the separate step
//! that scores a plan against ground truth.

use serde::{Deserialize, Serialize};

use crate::counts::VisitCounts;
use crate::dp::{self, ValueTables};
use crate::error::{Error, Result};
use crate::explore::{iota, ucbq, Dims};
use crate::mdp::{DeterministicPolicy, History, MixturePolicy, RewardFn, TabularMdp};

/// `b^k(x, a) = √(H² ι / (2 N^k(x, a)))`, capped at `H`; unvisited pairs get `H`.
pub fn planning_bonus(counts: &VisitCounts, iota: f64, horizon: usize) -> Vec<f64> {
    let h = horizon as f64;
    let mut bonus = Vec::with_capacity(counts.num_states() * counts.num_actions());
    for x in 0..counts.num_states() {
        for a in 0..counts.num_actions() {
            let n = counts.n_sa(x, a);
            bonus.push(if n == 0 {
                h
            } else {
                (h * h * iota / (2.0 * n as f64)).sqrt().min(h)
            });
        }
    }
    bonus
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    /// Plan at every `k` up to the last checkpoint. The mixture at checkpoint
    /// `k` is uniform over `π^1, …, π^k`.
    #[default]
    Exact,
    /// Plan only at the checkpoints. The mixture at the `i`-th checkpoint is
    /// uniform over the policies of the first `i` checkpoints, which only
    /// approximates the full mixture.
    Checkpoints,
}

/// State of the planner at one checkpoint episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub k: usize,
    /// The mixture at this checkpoint is `policies[..mixture_size]`.
    pub mixture_size: usize,
    /// Optimistic `Q^k`, `V^k`.
    pub values: ValueTables,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningResult {
    pub mode: PlanMode,
    pub iota: f64,
    /// `π^k` for every planned `k`, in increasing `k`.
    pub policies: Vec<DeterministicPolicy>,
    pub checkpoints: Vec<Checkpoint>,
}

impl PlanningResult {
    /// The returned policy: uniform over every planned `π^k`.
    pub fn mixture(&self) -> MixturePolicy {
        MixturePolicy::new(self.policies.clone()).expect("plan produces at least one policy")
    }

    /// The mixture in force at `checkpoint`.
    pub fn mixture_at(&self, checkpoint: &Checkpoint) -> MixturePolicy {
        MixturePolicy::new(self.policies[..checkpoint.mixture_size].to_vec())
            .expect("checkpoint mixtures are non-empty")
    }
}

/// Geometric checkpoints `1, 2, 4, …` up to and including `episodes`.
pub fn geometric_checkpoints(episodes: usize, base: usize) -> Vec<usize> {
    let base = base.max(2);
    let mut out = Vec::new();
    let mut k = 1;
    while k < episodes {
        out.push(k);
        k *= base;
    }
    if episodes > 0 {
        out.push(episodes);
    }
    out
}

/// Runs the planning phase on `history` for `reward`.
///
/// `checkpoints` are 1-based episode indices in `[1, K]`; duplicates are
/// ignored. `ι` uses the full `K = history.episodes()`.
pub fn plan(
    history: &History,
    reward: &RewardFn,
    delta: f64,
    checkpoints: &[usize],
    mode: PlanMode,
) -> Result<PlanningResult> {
    let episodes = history.episodes();
    if episodes == 0 {
        return Err(Error::EmptyHistory);
    }
    if history.horizon() != Some(reward.horizon())
        || history.trajectories.iter().any(|t| t.len() != reward.horizon())
    {
        return Err(Error::ShapeMismatch(
            "history trajectories must have the reward's horizon".to_string(),
        ));
    }
    let mut checkpoints = checkpoints.to_vec();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    if checkpoints.is_empty() {
        return Err(Error::InvalidConfig("no checkpoints requested".to_string()));
    }
    if let Some(&bad) = checkpoints.iter().find(|&&k| k == 0 || k > episodes) {
        return Err(Error::InvalidConfig(format!(
            "checkpoint {bad} outside [1, {episodes}]"
        )));
    }

    let dims = Dims {
        states: reward.num_states(),
        actions: reward.num_actions(),
        horizon: reward.horizon(),
    };
    let iota = iota(dims, episodes, delta);
    let last = *checkpoints.last().unwrap();

    let mut counts = VisitCounts::new(dims.states, dims.actions);
    let mut policies = Vec::new();
    let mut results = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = checkpoints.iter().copied().peekable();

    for k in 1..=last {
        let is_checkpoint = next_checkpoint.peek() == Some(&k);
        if mode == PlanMode::Exact || is_checkpoint {
            let values = optimistic_values(&counts, reward, iota, dims)?;
            policies.push(values.greedy_policy_visits(&counts));
            if is_checkpoint {
                next_checkpoint.next();
                results.push(Checkpoint {
                    k,
                    mixture_size: policies.len(),
                    values,
                });
            }
        }
        if k < last {
            counts.absorb(&history.trajectories[k - 1]);
        }
    }

    Ok(PlanningResult {
        mode,
        iota,
        policies,
        checkpoints: results,
    })
}

/// UCBQ on `P̂` from `counts` with the planning bonus.
pub fn optimistic_values(counts: &VisitCounts, reward: &RewardFn, iota: f64, dims: Dims) -> Result<ValueTables> {
    let p_hat = counts.empirical_transition();
    let bonus = planning_bonus(counts, iota, dims.horizon);
    ucbq(&p_hat, Some(reward), &bonus, dims.horizon)
}

/// Ground-truth score of a plan at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointError {
    pub checkpoint_k: usize,
    /// `V*_1(x_1) − V^mixture_1(x_1)`.
    pub planning_error: f64,
    pub mixture_size: usize,
    pub optimal_value: f64,
}

/// Exact planning error of every checkpoint mixture on the true MDP.
pub fn evaluate(result: &PlanningResult, mdp: &TabularMdp, reward: &RewardFn) -> Result<Vec<CheckpointError>> {
    let optimal_value = dp::optimal_values(mdp, reward)?.v(0, mdp.initial_state());

    // Consecutive π^k are often identical; reuse the last evaluation.
    let mut cumulative = Vec::with_capacity(result.policies.len());
    let mut total = 0.0;
    let mut cached: Option<(&DeterministicPolicy, f64)> = None;
    for policy in &result.policies {
        let value = match cached {
            Some((prev, v)) if prev == policy => v,
            _ => dp::initial_value(mdp, reward, policy)?,
        };
        cached = Some((policy, value));
        total += value;
        cumulative.push(total);
    }

    Ok(result
        .checkpoints
        .iter()
        .map(|c| CheckpointError {
            checkpoint_k: c.k,
            // Summation order can leave a mixture of optimal policies a few
            // ulps above V*.
            planning_error: (optimal_value - cumulative[c.mixture_size - 1] / c.mixture_size as f64).max(0.0),
            mixture_size: c.mixture_size,
            optimal_value,
        })
        .collect())
}

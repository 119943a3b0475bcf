//! Reward-free exploration driven by a clipped UCB bonus.
//!
//! Each episode recomputes the empirical kernel and the per-pair bonus from
//! the counts so far, solves the capped zero-reward DP with the bonus as the
//! only reward, and rolls out the greedy policy.

use serde::{Deserialize, Serialize};

use crate::counts::VisitCounts;
use crate::dp::{backward_induction, clip, TransitionModel, ValueTables};
use crate::error::{Error, Result};
use crate::mdp::{DeterministicPolicy, History, RewardFn, TabularMdp};
use crate::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BonusMode {
    /// Three-term bonus with the full constants and `ι`.
    #[default]
    Full,
    /// First two terms only, with constants and `ι` set to 1.
    Simplified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    /// Gap parameter `ρ`.
    pub rho: f64,
    /// Number of episodes `K`.
    pub episodes: usize,
    /// Failure probability `δ`.
    pub delta: f64,
    pub bonus_mode: BonusMode,
    pub seed: u64,
    /// Clip the leading bonus term at `ρ / 2H`. Off only for the unclipped
    /// comparator.
    #[serde(default = "default_true")]
    pub clipped: bool,
    /// Episodes `k` before which `N^k` is snapshotted.
    #[serde(default)]
    pub snapshots: Vec<usize>,
}

fn default_true() -> bool {
    true
}

impl ExplorationConfig {
    pub fn new(rho: f64, episodes: usize, delta: f64, bonus_mode: BonusMode, seed: u64) -> Self {
        Self {
            rho,
            episodes,
            delta,
            bonus_mode,
            seed,
            clipped: true,
            snapshots: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::InvalidConfig(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.episodes == 0 {
            return Err(Error::InvalidConfig("episodes must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Problem dimensions `(S, A, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn of(mdp: &TabularMdp) -> Self {
        Self {
            states: mdp.num_states(),
            actions: mdp.num_actions(),
            horizon: mdp.horizon(),
        }
    }
}

/// `ι = log(2 H S² A K / δ)`.
pub fn iota(dims: Dims, episodes: usize, delta: f64) -> f64 {
    let (h, s, a) = (dims.horizon as f64, dims.states as f64, dims.actions as f64);
    (2.0 * h * s * s * a * episodes as f64 / delta).ln()
}

/// Exploration bonus for a single pair visited `n` times, at most `H`.
///
/// Capping at `H` leaves the capped DP unchanged (any bonus of at least `H`
/// saturates `Q`) and keeps unvisited pairs, whose bonus is `H`, at least as
/// attractive as every visited pair when capped entries tie.
pub fn bonus_for_count(n: u64, cfg: &ExplorationConfig, dims: Dims, iota: f64) -> f64 {
    let h = dims.horizon as f64;
    if n == 0 {
        return h;
    }
    let s = dims.states as f64;
    let n = n as f64;
    let threshold = if cfg.clipped { cfg.rho / (2.0 * h) } else { 0.0 };
    let bonus = match cfg.bonus_mode {
        BonusMode::Full => {
            clip((8.0 * h * h * iota / n).sqrt(), threshold)
                + 120.0 * (s + h) * h.powi(3) * iota / n
                + 240.0 * h.powi(6) * s * s * iota * iota / (n * n)
        }
        BonusMode::Simplified => clip((h * h / n).sqrt(), threshold) + (s + h) * h.powi(3) / n,
    };
    bonus.min(h)
}

/// `c^k(x, a)` for every pair, row-major `[S][A]`.
pub fn exploration_bonus(counts: &VisitCounts, cfg: &ExplorationConfig, dims: Dims) -> Vec<f64> {
    let iota = iota(dims, cfg.episodes, cfg.delta);
    let mut bonus = Vec::with_capacity(dims.states * dims.actions);
    for x in 0..dims.states {
        for a in 0..dims.actions {
            bonus.push(bonus_for_count(counts.n_sa(x, a), cfg, dims, iota));
        }
    }
    bonus
}

/// Optimistic capped DP:
/// `Q_h(x, a) = min{H, r_h(x, a) + b(x, a) + P̂ V_{h+1}(x, a)}`,
/// `V_h(x) = max_a Q_h(x, a)`. `reward = None` means the zero reward.
pub fn ucbq<M: TransitionModel + ?Sized>(
    p_hat: &M,
    reward: Option<&RewardFn>,
    bonus: &[f64],
    horizon: usize,
) -> Result<ValueTables> {
    check_bonus_shape(p_hat, reward, bonus, horizon)?;
    let a_n = p_hat.num_actions();
    Ok(backward_induction(
        p_hat,
        horizon,
        |h, x, a| reward.map_or(0.0, |r| r.get(h, x, a)) + bonus[x * a_n + a],
        Some(horizon as f64),
        None,
    ))
}

/// The same capped DP evaluated along a fixed policy instead of the max.
pub fn ucbq_policy<M: TransitionModel + ?Sized>(
    p_hat: &M,
    reward: Option<&RewardFn>,
    bonus: &[f64],
    horizon: usize,
    policy: &DeterministicPolicy,
) -> Result<ValueTables> {
    check_bonus_shape(p_hat, reward, bonus, horizon)?;
    let a_n = p_hat.num_actions();
    Ok(backward_induction(
        p_hat,
        horizon,
        |h, x, a| reward.map_or(0.0, |r| r.get(h, x, a)) + bonus[x * a_n + a],
        Some(horizon as f64),
        Some(policy),
    ))
}

fn check_bonus_shape<M: TransitionModel + ?Sized>(
    p_hat: &M,
    reward: Option<&RewardFn>,
    bonus: &[f64],
    horizon: usize,
) -> Result<()> {
    let (s, a) = (p_hat.num_states(), p_hat.num_actions());
    if bonus.len() != s * a {
        return Err(Error::ShapeMismatch(format!(
            "bonus has {} entries, expected S*A = {}",
            bonus.len(),
            s * a
        )));
    }
    if let Some(r) = reward {
        if (r.horizon(), r.num_states(), r.num_actions()) != (horizon, s, a) {
            return Err(Error::ShapeMismatch("reward does not match (H, S, A)".to_string()));
        }
    }
    Ok(())
}

/// What the exploration loop saw along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationLog {
    /// `V̄^k_1(x_1)` for `k = 1..K`.
    pub exploration_values: Vec<f64>,
    /// `(k, N^k)` for every requested snapshot episode.
    pub snapshots: Vec<(usize, VisitCounts)>,
    /// Counts after all `K` episodes.
    pub final_counts: VisitCounts,
    pub iota: f64,
}

/// Runs the exploration phase for `cfg.episodes` episodes.
pub fn explore(mdp: &TabularMdp, cfg: &ExplorationConfig) -> Result<(History, ExplorationLog)> {
    mdp.validate()?;
    cfg.validate()?;
    let dims = Dims::of(mdp);
    let iota = iota(dims, cfg.episodes, cfg.delta);
    let mut counts = VisitCounts::new(dims.states, dims.actions);
    let mut history = History::new();
    let mut values = Vec::with_capacity(cfg.episodes);
    let mut snapshots = Vec::new();

    for k in 1..=cfg.episodes {
        if cfg.snapshots.contains(&k) {
            snapshots.push((k, counts.clone()));
        }
        let p_hat = counts.empirical_transition();
        let bonus = exploration_bonus(&counts, cfg, dims);
        let tables = ucbq(&p_hat, None, &bonus, dims.horizon)?;
        values.push(tables.v(0, mdp.initial_state()));

        let policy = tables.greedy_policy_visits(&counts);
        let mut rng = stream_rng(cfg.seed, k as u64);
        let traj = mdp.rollout(&policy, &mut rng);
        counts.absorb(&traj);
        history.push(traj);
    }

    Ok((
        history,
        ExplorationLog {
            exploration_values: values,
            snapshots,
            final_counts: counts,
            iota,
        },
    ))
}

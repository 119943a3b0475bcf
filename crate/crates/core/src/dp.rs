//! Exact finite-horizon dynamic programming.
//!
//! Everything here runs on a known transition model: the true MDP for
//! ground truth, or an empirical kernel for the planners.

use crate::error::{Error, Result};
use crate::mdp::{DeterministicPolicy, MixturePolicy, RewardFn, TabularMdp};

/// Gaps below this are float noise and count as zero.
pub const GAP_EPSILON: f64 = 1e-12;

/// Largest policy count [`brute_force_optimal`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// A stationary next-state model `P[x][a][·]`.
pub trait TransitionModel {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn row(&self, x: usize, a: usize) -> &[f64];

    /// `Σ_y P[x][a][y] · v[y]`
    fn expect(&self, x: usize, a: usize, v: &[f64]) -> f64 {
        self.row(x, a).iter().zip(v).map(|(p, v)| p * v).sum()
    }
}

impl TransitionModel for TabularMdp {
    fn num_states(&self) -> usize {
        TabularMdp::num_states(self)
    }

    fn num_actions(&self) -> usize {
        TabularMdp::num_actions(self)
    }

    fn row(&self, x: usize, a: usize) -> &[f64] {
        TabularMdp::row(self, x, a)
    }
}

/// `Q[h][x][a]` for `h < H` and `V[h][x]` for `h ≤ H`, with `V[H][·] = 0`.
///
/// Capped tables also keep the pre-cap `Q`, which breaks ties between
/// entries that hit the cap.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    q: Vec<f64>,
    v: Vec<f64>,
    q_raw: Option<Vec<f64>>,
}

impl ValueTables {
    fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            q: vec![0.0; horizon * num_states * num_actions],
            v: vec![0.0; (horizon + 1) * num_states],
            q_raw: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn q(&self, h: usize, x: usize, a: usize) -> f64 {
        self.q[(h * self.num_states + x) * self.num_actions + a]
    }

    pub fn v(&self, h: usize, x: usize) -> f64 {
        self.v[h * self.num_states + x]
    }

    pub fn q_row(&self, h: usize, x: usize) -> &[f64] {
        let start = (h * self.num_states + x) * self.num_actions;
        &self.q[start..start + self.num_actions]
    }

    pub fn v_step(&self, h: usize) -> &[f64] {
        &self.v[h * self.num_states..(h + 1) * self.num_states]
    }

    pub fn q_values(&self) -> &[f64] {
        &self.q
    }

    pub fn v_values(&self) -> &[f64] {
        &self.v
    }

    /// Pre-cap `Q[h][x][·]`; equal to [`Self::q_row`] for uncapped tables.
    pub fn q_raw_row(&self, h: usize, x: usize) -> &[f64] {
        let start = (h * self.num_states + x) * self.num_actions;
        let q = self.q_raw.as_ref().unwrap_or(&self.q);
        &q[start..start + self.num_actions]
    }

    /// Greedy action at `(h, x)`. Ties in `Q` go to the larger pre-cap value,
    /// then to the smallest action index.
    pub fn greedy_action(&self, h: usize, x: usize) -> usize {
        match &self.q_raw {
            None => argmax(self.q_row(h, x)),
            Some(_) => argmax_tiebreak(self.q_row(h, x), self.q_raw_row(h, x), None),
        }
    }

    /// Greedy policy with respect to `Q`, see [`Self::greedy_action`].
    pub fn greedy_policy(&self) -> DeterministicPolicy {
        self.greedy_policy_by(|_| None)
    }

    /// Greedy policy for optimistic tables: ties in `Q` go to the larger
    /// pre-cap value, then to the pair with fewer visits `visits(x)[a]`, then
    /// to the smallest action index.
    pub fn greedy_policy_visits(&self, visits: &crate::counts::VisitCounts) -> DeterministicPolicy {
        let rows: Vec<Vec<u64>> = (0..self.num_states)
            .map(|x| (0..self.num_actions).map(|a| visits.n_sa(x, a)).collect())
            .collect();
        self.greedy_policy_by(|x| Some(&rows[x]))
    }

    fn greedy_policy_by<'a>(&self, visits: impl Fn(usize) -> Option<&'a [u64]>) -> DeterministicPolicy {
        let mut actions = Vec::with_capacity(self.horizon * self.num_states);
        for h in 0..self.horizon {
            for x in 0..self.num_states {
                actions.push(match &self.q_raw {
                    None => argmax(self.q_row(h, x)),
                    Some(_) => argmax_tiebreak(self.q_row(h, x), self.q_raw_row(h, x), visits(x)),
                });
            }
        }
        DeterministicPolicy::new(self.horizon, self.num_states, actions)
            .expect("greedy policy has H*S entries")
    }
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the maximal entry of `values`. Exact ties go to the larger
/// `secondary`, then to the smaller `visits` entry, then to the smallest index.
pub fn argmax_tiebreak(values: &[f64], secondary: &[f64], visits: Option<&[u64]>) -> usize {
    let key = |i: usize| {
        (
            values[i],
            secondary[i],
            std::cmp::Reverse(visits.map_or(0, |v| v[i])),
        )
    };
    let mut best = 0;
    for i in 1..values.len() {
        if key(i).partial_cmp(&key(best)) == Some(std::cmp::Ordering::Greater) {
            best = i;
        }
    }
    best
}

/// Generic backward induction.
///
/// `Q[h][x][a] = min{cap, step(h, x, a) + Σ_y P[x][a][y] V[h+1][y]}` and
/// `V[h][x]` is either `max_a Q[h][x][a]` or `Q[h][x][π(h, x)]`.
pub fn backward_induction<M, F>(
    model: &M,
    horizon: usize,
    step: F,
    cap: Option<f64>,
    policy: Option<&DeterministicPolicy>,
) -> ValueTables
where
    M: TransitionModel + ?Sized,
    F: Fn(usize, usize, usize) -> f64,
{
    let (s, a_n) = (model.num_states(), model.num_actions());
    let mut tables = ValueTables::zeros(horizon, s, a_n);
    let mut q_raw = cap.map(|_| vec![0.0; tables.q.len()]);
    for h in (0..horizon).rev() {
        let (head, tail) = tables.v.split_at_mut((h + 1) * s);
        let next_v = &tail[..s];
        let cur_v = &mut head[h * s..];
        for x in 0..s {
            let q_row = &mut tables.q[(h * s + x) * a_n..(h * s + x + 1) * a_n];
            for (a, q) in q_row.iter_mut().enumerate() {
                let raw = step(h, x, a) + model.expect(x, a, next_v);
                if let Some(raw_table) = q_raw.as_mut() {
                    raw_table[(h * s + x) * a_n + a] = raw;
                }
                *q = match cap {
                    Some(c) => raw.min(c),
                    None => raw,
                };
            }
            cur_v[x] = match policy {
                Some(pi) => q_row[pi.action(h, x)],
                None => q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
        }
    }
    tables.q_raw = q_raw;
    tables
}

/// Optimal `Q*` and `V*` by backward induction.
pub fn optimal_values(mdp: &TabularMdp, reward: &RewardFn) -> Result<ValueTables> {
    mdp.check_reward(reward)?;
    Ok(backward_induction(mdp, mdp.horizon(), |h, x, a| reward.get(h, x, a), None, None))
}

/// `Q^π` and `V^π` of a deterministic policy.
pub fn policy_value(mdp: &TabularMdp, reward: &RewardFn, policy: &DeterministicPolicy) -> Result<ValueTables> {
    mdp.check_reward(reward)?;
    mdp.check_policy(policy)?;
    Ok(backward_induction(
        mdp,
        mdp.horizon(),
        |h, x, a| reward.get(h, x, a),
        None,
        Some(policy),
    ))
}

/// `V^π_1(x_1)` of a deterministic policy.
pub fn initial_value(mdp: &TabularMdp, reward: &RewardFn, policy: &DeterministicPolicy) -> Result<f64> {
    Ok(policy_value(mdp, reward, policy)?.v(0, mdp.initial_state()))
}

/// Value at `x_1` of a uniform mixture: the mean of its components' values.
pub fn mixture_value(mdp: &TabularMdp, reward: &RewardFn, mix: &MixturePolicy) -> Result<f64> {
    if mix.is_empty() {
        return Err(Error::EmptyMixture);
    }
    let mut total = 0.0;
    for policy in mix.components() {
        total += initial_value(mdp, reward, policy)?;
    }
    Ok(total / mix.len() as f64)
}

/// Sub-optimality gaps `V*_h(x) − Q*_h(x, a)` and their smallest positive entry.
///
/// With a stationary kernel every state formally exists at every step, so a
/// layered construction picks up `(h, x)` pairs no policy can ever occupy.
/// `gap_min` therefore ranges over pairs reachable at step `h` from `x_1`;
/// `gap_min_all` keeps the minimum over the whole table.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    gap: Vec<f64>,
    reachable: Vec<bool>,
    /// Smallest gap above [`GAP_EPSILON`] over reachable `(h, x)`, `+∞` if none.
    pub gap_min: f64,
    /// Smallest gap above [`GAP_EPSILON`] over every `(h, x)`, `+∞` if none.
    pub gap_min_all: f64,
    /// Whether the claimed gap parameter satisfies `0 < ρ ≤ gap_min`.
    pub rho_satisfied: Option<bool>,
}

impl GapReport {
    pub fn gap(&self, h: usize, x: usize, a: usize) -> f64 {
        self.gap[(h * self.num_states + x) * self.num_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.gap
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Whether state `x` can be occupied at step `h`.
    pub fn is_reachable(&self, h: usize, x: usize) -> bool {
        self.reachable[h * self.num_states + x]
    }
}

/// `reachable[h * S + x]` is true iff some policy reaches `x` at step `h`
/// with positive probability.
pub fn reachable_steps(mdp: &TabularMdp) -> Vec<bool> {
    let (hz, s) = (mdp.horizon(), mdp.num_states());
    let mut reachable = vec![false; hz * s];
    reachable[mdp.initial_state()] = true;
    for h in 1..hz {
        for x in 0..s {
            if !reachable[(h - 1) * s + x] {
                continue;
            }
            for a in 0..mdp.num_actions() {
                for (y, &p) in mdp.row(x, a).iter().enumerate() {
                    if p > 0.0 {
                        reachable[h * s + y] = true;
                    }
                }
            }
        }
    }
    reachable
}

pub fn gaps(mdp: &TabularMdp, reward: &RewardFn, rho_claim: Option<f64>) -> Result<GapReport> {
    let optimal = optimal_values(mdp, reward)?;
    Ok(gaps_from_values(&optimal, reachable_steps(mdp), rho_claim))
}

fn gaps_from_values(optimal: &ValueTables, reachable: Vec<bool>, rho_claim: Option<f64>) -> GapReport {
    let (hz, s, a_n) = (optimal.horizon, optimal.num_states, optimal.num_actions);
    let mut gap = Vec::with_capacity(hz * s * a_n);
    let mut gap_min = f64::INFINITY;
    let mut gap_min_all = f64::INFINITY;
    for h in 0..hz {
        for x in 0..s {
            let v = optimal.v(h, x);
            for &q in optimal.q_row(h, x) {
                let g = (v - q).max(0.0);
                if g > GAP_EPSILON {
                    gap_min_all = gap_min_all.min(g);
                    if reachable[h * s + x] {
                        gap_min = gap_min.min(g);
                    }
                }
                gap.push(g);
            }
        }
    }
    GapReport {
        horizon: hz,
        num_states: s,
        num_actions: a_n,
        gap,
        reachable,
        gap_min,
        gap_min_all,
        rho_satisfied: rho_claim.map(|rho| rho > 0.0 && rho <= gap_min),
    }
}

/// `clip_ρ[z] = z · 1{z ≥ ρ}`.
pub fn clip(z: f64, rho: f64) -> f64 {
    if z >= rho {
        z
    } else {
        0.0
    }
}

/// Maximum of `V^π_1(x_1)` over every deterministic policy.
pub fn brute_force_optimal(mdp: &TabularMdp, reward: &RewardFn) -> Result<f64> {
    mdp.check_reward(reward)?;
    let (hz, s, a_n) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let count = (a_n as f64).powi((s * hz) as i32);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let mut best = f64::NEG_INFINITY;
    for index in 0..count as u64 {
        let policy = DeterministicPolicy::from_index(hz, s, a_n, index);
        best = best.max(initial_value(mdp, reward, &policy)?);
    }
    Ok(best)
}

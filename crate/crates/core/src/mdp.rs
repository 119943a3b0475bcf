//! Tabular finite-horizon MDPs, rewards, policies and trajectories.
//!
//! States and actions are dense 0-based indices. Transitions are stationary:
//! the same kernel `P[x][a][·]` is used at every step of an episode.

use rand::Rng;

use crate::error::{Error, Result};

/// Absolute tolerance on row sums of a transition kernel.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A finite-horizon MDP with a stationary transition kernel and a fixed
/// initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    /// Row-major `P[x][a][y]`.
    transition: Vec<f64>,
}

impl TabularMdp {
    /// Builds an MDP from a flat row-major `P[x][a][y]` buffer and validates it.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        transition: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self::new_unchecked(num_states, num_actions, horizon, initial_state, transition)?;
        mdp.validate()?;
        Ok(mdp)
    }

    /// Builds an MDP checking only the buffer shape.
    pub fn new_unchecked(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        transition: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::ShapeMismatch(format!(
                "S={num_states}, A={num_actions}, H={horizon} must all be positive"
            )));
        }
        let expected = num_states * num_actions * num_states;
        if transition.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "transition has {} entries, expected S*A*S = {expected}",
                transition.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            initial_state,
            transition,
        })
    }

    /// Builds an MDP from nested `P[x][a][y]` rows.
    pub fn from_nested(
        horizon: usize,
        initial_state: usize,
        transition: &[Vec<Vec<f64>>],
    ) -> Result<Self> {
        let num_states = transition.len();
        let num_actions = transition.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(num_states * num_actions * num_states);
        for (x, per_action) in transition.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(Error::ShapeMismatch(format!(
                    "state {x} has {} actions, expected {num_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::ShapeMismatch(format!(
                        "row P[{x}][{a}] has {} entries, expected {num_states}",
                        row.len()
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        Self::new(num_states, num_actions, horizon, initial_state, flat)
    }

    /// Checks that every row is a probability distribution and that the
    /// initial state is in range.
    pub fn validate(&self) -> Result<()> {
        if self.initial_state >= self.num_states {
            return Err(Error::BadInitialState {
                initial: self.initial_state,
                num_states: self.num_states,
            });
        }
        for x in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(x, a);
                if let Some((y, &p)) = row.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
                    return Err(Error::NegativeProbability {
                        state: x,
                        action: a,
                        next: y,
                        value: p,
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::NonStochasticRow {
                        state: x,
                        action: a,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Next-state distribution `P[x][a][·]`.
    pub fn row(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn prob(&self, x: usize, a: usize, y: usize) -> f64 {
        self.row(x, a)[y]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// Draws the successor of `(x, a)` by inverting the row's CDF.
    pub fn sample_next<R: Rng + ?Sized>(&self, x: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(x, a), rng)
    }

    /// Runs one episode of `policy` from the initial state.
    pub fn rollout<R: Rng + ?Sized>(&self, policy: &DeterministicPolicy, rng: &mut R) -> Trajectory {
        debug_assert_eq!(policy.horizon(), self.horizon);
        let mut steps = Vec::with_capacity(self.horizon);
        let mut state = self.initial_state;
        for h in 0..self.horizon {
            let action = policy.action(h, state);
            steps.push((state, action));
            state = self.sample_next(state, action, rng);
        }
        Trajectory {
            steps,
            terminal_state: state,
        }
    }

    /// Errors unless `reward` has this MDP's `(H, S, A)` shape.
    pub fn check_reward(&self, reward: &RewardFn) -> Result<()> {
        let dims = (reward.horizon(), reward.num_states(), reward.num_actions());
        if dims != (self.horizon, self.num_states, self.num_actions) {
            return Err(Error::ShapeMismatch(format!(
                "reward has (H,S,A)={dims:?}, MDP has ({}, {}, {})",
                self.horizon, self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    /// Errors unless `policy` has this MDP's shape and valid actions.
    pub fn check_policy(&self, policy: &DeterministicPolicy) -> Result<()> {
        if policy.horizon() != self.horizon || policy.num_states() != self.num_states {
            return Err(Error::ShapeMismatch(format!(
                "policy is {}x{}, MDP needs {}x{}",
                policy.horizon(),
                policy.num_states(),
                self.horizon,
                self.num_states
            )));
        }
        if let Some(&bad) = policy.actions.iter().find(|&&a| a >= self.num_actions) {
            return Err(Error::ShapeMismatch(format!(
                "policy uses action {bad}, MDP has {} actions",
                self.num_actions
            )));
        }
        Ok(())
    }
}

/// Inverse-CDF draw from a (possibly slightly unnormalized) categorical row.
pub fn sample_categorical<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (y, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = y;
            if u < acc {
                return y;
            }
        }
    }
    // Rounding left u above the accumulated mass.
    last_positive
}

/// Deterministic per-step reward table `r[h][x][a]` with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFn {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl RewardFn {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != horizon * num_states * num_actions {
            return Err(Error::ShapeMismatch(format!(
                "reward has {} entries, expected H*S*A = {}",
                values.len(),
                horizon * num_states * num_actions
            )));
        }
        let reward = Self {
            horizon,
            num_states,
            num_actions,
            values,
        };
        reward.validate()?;
        Ok(reward)
    }

    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self::constant(horizon, num_states, num_actions, 0.0)
    }

    pub fn constant(horizon: usize, num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            values: vec![value; horizon * num_states * num_actions],
        }
    }

    /// Builds a reward from `f(h, x, a)`.
    pub fn from_fn(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(horizon * num_states * num_actions);
        for h in 0..horizon {
            for x in 0..num_states {
                for a in 0..num_actions {
                    values.push(f(h, x, a));
                }
            }
        }
        Self::new(horizon, num_states, num_actions, values)
    }

    pub fn from_nested(values: &[Vec<Vec<f64>>]) -> Result<Self> {
        let horizon = values.len();
        let num_states = values.first().map_or(0, Vec::len);
        let num_actions = values.first().and_then(|v| v.first()).map_or(0, Vec::len);
        let flat: Vec<f64> = values.iter().flatten().flatten().copied().collect();
        Self::new(horizon, num_states, num_actions, flat)
    }

    pub fn validate(&self) -> Result<()> {
        for h in 0..self.horizon {
            for x in 0..self.num_states {
                for a in 0..self.num_actions {
                    let value = self.get(h, x, a);
                    if !(0.0..=1.0).contains(&value) {
                        return Err(Error::RewardOutOfRange {
                            step: h,
                            state: x,
                            action: a,
                            value,
                        });
                    }
                }
            }
        }
        Ok(())
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

    pub fn get(&self, h: usize, x: usize, a: usize) -> f64 {
        self.values[(h * self.num_states + x) * self.num_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A deterministic, step-dependent policy `π[h][x]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicPolicy {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(horizon: usize, num_states: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != horizon * num_states {
            return Err(Error::ShapeMismatch(format!(
                "policy has {} entries, expected H*S = {}",
                actions.len(),
                horizon * num_states
            )));
        }
        Ok(Self {
            horizon,
            num_states,
            actions,
        })
    }

    /// The policy taking `action` everywhere.
    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self {
            horizon,
            num_states,
            actions: vec![action; horizon * num_states],
        }
    }

    /// Decodes `index` in base `num_actions`, one digit per `(h, x)` cell.
    /// Enumerating `0..A^(H*S)` visits every deterministic policy once.
    pub fn from_index(horizon: usize, num_states: usize, num_actions: usize, mut index: u64) -> Self {
        let mut actions = vec![0; horizon * num_states];
        for slot in actions.iter_mut() {
            *slot = (index % num_actions as u64) as usize;
            index /= num_actions as u64;
        }
        Self {
            horizon,
            num_states,
            actions,
        }
    }

    pub fn random<R: Rng + ?Sized>(horizon: usize, num_states: usize, num_actions: usize, rng: &mut R) -> Self {
        let actions = (0..horizon * num_states)
            .map(|_| rng.gen_range(0..num_actions))
            .collect();
        Self {
            horizon,
            num_states,
            actions,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn action(&self, h: usize, x: usize) -> usize {
        self.actions[h * self.num_states + x]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

/// A policy drawn uniformly at random from a list of deterministic policies
/// once per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePolicy {
    components: Vec<DeterministicPolicy>,
}

impl MixturePolicy {
    pub fn new(components: Vec<DeterministicPolicy>) -> Result<Self> {
        let first = components.first().ok_or(Error::EmptyMixture)?;
        let shape = (first.horizon, first.num_states);
        if components.iter().any(|p| (p.horizon, p.num_states) != shape) {
            return Err(Error::ShapeMismatch(
                "mixture components disagree on (H, S)".to_string(),
            ));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[DeterministicPolicy] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &DeterministicPolicy {
        &self.components[rng.gen_range(0..self.components.len())]
    }
}

/// One episode: the `(state, action)` pair at each step plus the state
/// reached after the last step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
    pub terminal_state: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `x_{h+1}` for every step `h`.
    pub fn next_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps
            .iter()
            .skip(1)
            .map(|&(x, _)| x)
            .chain(std::iter::once(self.terminal_state))
    }

    /// `(x_h, a_h, x_{h+1})` triples.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.steps
            .iter()
            .zip(self.next_states())
            .map(|(&(x, a), y)| (x, a, y))
    }
}

/// The exploration dataset: `K` trajectories of length `H`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct History {
    pub trajectories: Vec<Trajectory>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, trajectory: Trajectory) {
        self.trajectories.push(trajectory);
    }

    pub fn episodes(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn horizon(&self) -> Option<usize> {
        self.trajectories.first().map(Trajectory::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state(row: [f64; 2]) -> Result<TabularMdp> {
        TabularMdp::new(2, 1, 1, 0, vec![row[0], row[1], 0.5, 0.5])
    }

    #[test]
    fn identity_transition_is_valid() {
        assert!(TabularMdp::new(1, 1, 1, 0, vec![1.0]).is_ok());
    }

    #[test]
    fn non_stochastic_row_is_rejected() {
        match two_state([0.6, 0.5]) {
            Err(Error::NonStochasticRow { state: 0, action: 0, sum }) => {
                assert!((sum - 1.1).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn row_sum_tolerance_boundary() {
        assert!(two_state([0.5, 0.5 + 1e-12]).is_ok());
        assert!(two_state([0.5, 0.5 + 1e-8]).is_err());
    }

    #[test]
    fn negative_probability_and_bad_initial_state() {
        assert!(matches!(
            two_state([1.5, -0.5]),
            Err(Error::NegativeProbability { next: 1, .. })
        ));
        assert!(matches!(
            TabularMdp::new(1, 1, 1, 1, vec![1.0]),
            Err(Error::BadInitialState { initial: 1, num_states: 1 })
        ));
    }

    #[test]
    fn one_hot_row_always_samples_its_state() {
        let mut p = vec![0.0; 5 * 5];
        for x in 0..5 {
            p[x * 5 + 3] = 1.0;
        }
        let mdp = TabularMdp::new(5, 1, 1, 0, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(mdp.sample_next(2, 0, &mut rng), 3);
        }
    }

    #[test]
    fn fair_coin_frequency_within_six_sigma() {
        let mdp = two_state([0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let zeros = (0..n).filter(|_| mdp.sample_next(0, 0, &mut rng) == 0).count();
        let freq = zeros as f64 / n as f64;
        assert!((0.47..=0.53).contains(&freq), "{freq}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mdp = two_state([0.3, 0.7]).unwrap();
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..64).map(|_| mdp.sample_next(0, 0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn chain_rollout_follows_policy() {
        // 0 -> 1 -> 2 -> 2 under every action.
        let mut p = vec![0.0; 3 * 2 * 3];
        for a in 0..2 {
            p[a * 3 + 1] = 1.0;
            p[(2 + a) * 3 + 2] = 1.0;
            p[(2 * 2 + a) * 3 + 2] = 1.0;
        }
        let mdp = TabularMdp::new(3, 2, 2, 0, p).unwrap();
        let policy = DeterministicPolicy::new(2, 3, vec![1, 0, 0, 0, 1, 0]).unwrap();
        let traj = mdp.rollout(&policy, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(traj.steps, vec![(0, 1), (1, 1)]);
        assert_eq!(traj.terminal_state, 2);
        assert_eq!(traj.next_states().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn single_state_rollout_stays_put() {
        let mdp = TabularMdp::new(1, 3, 6, 0, vec![1.0; 3]).unwrap();
        let policy = DeterministicPolicy::constant(6, 1, 2);
        let traj = mdp.rollout(&policy, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(traj.len(), 6);
        assert!(traj.steps.iter().all(|&(x, a)| x == 0 && a == 2));
    }

    #[test]
    fn policy_index_decoding_covers_all_policies() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..16 {
            seen.insert(DeterministicPolicy::from_index(2, 2, 2, i));
        }
        assert_eq!(seen.len(), 16);
    }

    #[test]
    fn mixture_rejects_empty() {
        assert!(matches!(MixturePolicy::new(vec![]), Err(Error::EmptyMixture)));
    }

    #[test]
    fn reward_range_checked() {
        assert!(RewardFn::new(1, 1, 2, vec![0.0, 1.0]).is_ok());
        assert!(matches!(
            RewardFn::new(1, 1, 2, vec![0.0, 1.5]),
            Err(Error::RewardOutOfRange { action: 1, .. })
        ));
    }
}

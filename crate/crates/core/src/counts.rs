//! Visitation counts and the empirical transition kernel built from them.

use crate::dp::TransitionModel;
use crate::mdp::{History, Trajectory};

/// `N(x, a)` and `N(x, a, y)` accumulated over absorbed episodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitCounts {
    num_states: usize,
    num_actions: usize,
    n_sa: Vec<u64>,
    n_say: Vec<u64>,
    episodes_absorbed: usize,
}

impl VisitCounts {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            n_sa: vec![0; num_states * num_actions],
            n_say: vec![0; num_states * num_actions * num_states],
            episodes_absorbed: 0,
        }
    }

    /// Counts of the first `episodes` trajectories in `history`.
    pub fn from_history(num_states: usize, num_actions: usize, history: &History, episodes: usize) -> Self {
        let mut counts = Self::new(num_states, num_actions);
        for traj in history.trajectories.iter().take(episodes) {
            counts.absorb(traj);
        }
        counts
    }

    /// Adds every `(x_h, a_h, x_{h+1})` of one episode, including the
    /// transition out of the last step.
    ///
    /// Panics if the trajectory indexes outside `S × A`.
    pub fn absorb(&mut self, traj: &Trajectory) {
        for (x, a, y) in traj.transitions() {
            assert!(
                x < self.num_states && a < self.num_actions && y < self.num_states,
                "transition ({x}, {a}, {y}) out of bounds"
            );
            let sa = x * self.num_actions + a;
            self.n_sa[sa] += 1;
            self.n_say[sa * self.num_states + y] += 1;
        }
        self.episodes_absorbed += 1;
    }

    /// Adds one sampled `(x, a) -> y` transition without touching the episode
    /// count. Used by simulator-based sampling.
    pub fn record(&mut self, x: usize, a: usize, y: usize) {
        let sa = x * self.num_actions + a;
        self.n_sa[sa] += 1;
        self.n_say[sa * self.num_states + y] += 1;
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn episodes_absorbed(&self) -> usize {
        self.episodes_absorbed
    }

    pub fn n_sa(&self, x: usize, a: usize) -> u64 {
        self.n_sa[x * self.num_actions + a]
    }

    pub fn n_say(&self, x: usize, a: usize, y: usize) -> u64 {
        self.n_say[(x * self.num_actions + a) * self.num_states + y]
    }

    pub fn total(&self) -> u64 {
        self.n_sa.iter().sum()
    }

    /// `P̂(y | x, a) = N(x, a, y) / N(x, a)`, or `1/S` for unvisited pairs.
    pub fn empirical_transition(&self) -> EmpiricalTransition {
        let s = self.num_states;
        let mut p_hat = Vec::with_capacity(self.n_say.len());
        for (sa, &n) in self.n_sa.iter().enumerate() {
            let row = &self.n_say[sa * s..(sa + 1) * s];
            if n > 0 {
                p_hat.extend(row.iter().map(|&c| c as f64 / n as f64));
            } else {
                p_hat.extend(std::iter::repeat_n(1.0 / s as f64, s));
            }
        }
        EmpiricalTransition {
            num_states: s,
            num_actions: self.num_actions,
            p_hat,
        }
    }
}

/// Empirical kernel `P̂[x][a][y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTransition {
    num_states: usize,
    num_actions: usize,
    p_hat: Vec<f64>,
}

impl EmpiricalTransition {
    pub fn prob(&self, x: usize, a: usize, y: usize) -> f64 {
        self.p_hat[(x * self.num_actions + a) * self.num_states + y]
    }

    pub fn values(&self) -> &[f64] {
        &self.p_hat
    }
}

impl TransitionModel for EmpiricalTransition {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn row(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.num_actions + a) * self.num_states;
        &self.p_hat[start..start + self.num_states]
    }
}

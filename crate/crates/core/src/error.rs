use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row P[{state}][{action}] sums to {sum}, expected 1")]
    NonStochasticRow { state: usize, action: usize, sum: f64 },

    #[error("P[{state}][{action}][{next}] = {value} is negative")]
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },

    #[error("initial state {initial} out of range for {num_states} states")]
    BadInitialState { initial: usize, num_states: usize },

    #[error("reward r[{step}][{state}][{action}] = {value} outside [0, 1]")]
    RewardOutOfRange {
        step: usize,
        state: usize,
        action: usize,
        value: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mixture policy has no components")]
    EmptyMixture,

    #[error("brute force would enumerate {0} policies (limit 1e6)")]
    TooLarge(f64),

    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("history is empty")]
    EmptyHistory,

    #[error("error curve is empty")]
    EmptyCurve,

    #[error("slope fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("unknown reward {0:?}")]
    UnknownReward(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

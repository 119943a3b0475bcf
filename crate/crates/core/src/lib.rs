//! Gap-dependent task-agnostic exploration for tabular finite-horizon MDPs.
//!
//! The pipeline has two phases. [`explore`] collects `K` reward-free episodes
//! with a clipped UCB bonus. [`plan`] later receives a reward and builds
//! optimistic greedy policies from the collected counts. [`envs`] has the
//! benchmark environments, [`baselines`] the comparators and [`harness`]
//! runs end-to-end experiments.

pub mod baselines;
pub mod counts;
pub mod dp;
pub mod envs;
pub mod error;
pub mod explore;
pub mod harness;
pub mod io;
pub mod mdp;
pub mod plan;
pub mod plot;

pub use counts::{EmpiricalTransition, VisitCounts};
pub use dp::{GapReport, TransitionModel, ValueTables};
pub use error::{Error, Result};
pub use explore::{explore, BonusMode, Dims, ExplorationConfig, ExplorationLog};
pub use mdp::{DeterministicPolicy, History, MixturePolicy, RewardFn, TabularMdp, Trajectory};
pub use plan::{plan, PlanMode, PlanningResult};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent deterministic stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

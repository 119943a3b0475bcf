//! Experiment orchestration.
//!
//! A run is described by an [`ExperimentConfig`] (TOML with an `[env]` and a
//! `[run]` table). [`run_experiment`] builds or loads the environment, runs
//! every requested method, scores each checkpoint against the true MDP and
//! writes the results directory:
//!
//! | file               | contents                                         |
//! |--------------------|--------------------------------------------------|
//! | `env.json`         | the environment, with layout                     |
//! | `history.csv`      | exploration history of the `gap` method          |
//! | `history_unclipped.csv` | history of the `unclipped` method           |
//! | `results.csv`      | `method,checkpoint_k,planning_error,…`           |
//! | `reference.csv`    | `√k` minimax reference per method                |
//! | `manifest.json`    | resolved config plus derived quantities          |
//! | `errors.svg`       | log-log plot of the error curves                 |
//!
//! The manifest embeds the full config, so [`run_from_manifest`] reproduces
//! `results.csv` byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{mab_uniform_explore, simulator_sample_bound, simulator_uniform, BernoulliBandit};
use crate::dp;
use crate::envs::{bandit_as_mdp, hard_instance_with, random_gridworld, HardInstanceParams, Layout};
use crate::error::{Error, Result};
use crate::explore::{explore, iota, BonusMode, Dims, ExplorationConfig};
use crate::io::{save_history, write_method_results, Environment, ResultRow};
use crate::mdp::{History, RewardFn, TabularMdp};
use crate::plan::{evaluate, geometric_checkpoints, plan, PlanMode};
use crate::plot::{render_loglog, Series};
use crate::stream_rng;

/// Stream offsets keep the baselines' randomness disjoint from the
/// exploration episodes, which use streams `1..=K`.
const SIMULATOR_STREAM: u64 = 1 << 40;
const MAB_STREAM: u64 = 2 << 40;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_FILE: &str = "results.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub run: RunSpec,
}

/// Where the environment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvSpec {
    Hard(HardInstanceParams),
    Gridworld {
        states: usize,
        actions: usize,
        horizon: usize,
        rho: f64,
        #[serde(default)]
        seed: u64,
    },
    Bandit {
        means: Vec<f64>,
    },
    /// An environment JSON file. Relative paths are resolved against the
    /// config file's directory by [`ExperimentConfig::load`].
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Clipped exploration followed by optimistic planning.
    Gap,
    /// The same with the clip disabled.
    Unclipped,
    /// Uniform simulator sampling with plug-in DP, at a matched budget.
    Simulator,
    /// Uniform arm pulls; bandit environments only.
    Mab,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gap => "gap",
            Method::Unclipped => "unclipped",
            Method::Simulator => "simulator",
            Method::Mab => "mab",
        }
    }
}

/// `agnostic` sets `ρ = ε / H` from a target accuracy `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Agnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub episodes: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub bonus: BonusMode,
    #[serde(default)]
    pub seed: u64,
    /// Explicit `ρ`. Defaults to the environment's own `ρ` when it has one.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub preset: Option<Preset>,
    /// Target accuracy for the `agnostic` preset.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Explicit checkpoints; otherwise geometric with `checkpoint_base`.
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default = "default_base")]
    pub checkpoint_base: usize,
    #[serde(default)]
    pub plan_mode: PlanMode,
    /// Name of the revealed reward; the environment's first reward if unset.
    #[serde(default)]
    pub reward: Option<String>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_methods() -> Vec<Method> {
    vec![Method::Gap]
}

fn default_base() -> usize {
    2
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML config and makes a relative environment path absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_toml(&fs::read_to_string(path)?)?;
        if let EnvSpec::File { path: env_path } = &mut config.env {
            if env_path.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                *env_path = base.join(&*env_path);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let run = &self.run;
        if run.episodes == 0 {
            return Err(Error::InvalidConfig("run.episodes must be at least 1".into()));
        }
        if !(run.delta > 0.0 && run.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("run.delta must lie in (0, 1), got {}", run.delta)));
        }
        if run.methods.is_empty() {
            return Err(Error::InvalidConfig("run.methods is empty".into()));
        }
        match (run.preset, run.epsilon, run.rho) {
            (Some(Preset::Agnostic), None, _) => {
                return Err(Error::InvalidConfig("preset \"agnostic\" needs run.epsilon".into()))
            }
            (Some(Preset::Agnostic), Some(_), Some(_)) => {
                return Err(Error::InvalidConfig("preset \"agnostic\" computes rho; drop run.rho".into()))
            }
            (None, Some(_), _) => {
                return Err(Error::InvalidConfig("run.epsilon is only used by preset \"agnostic\"".into()))
            }
            _ => {}
        }
        if let Some(cps) = &run.checkpoints {
            if cps.is_empty() {
                return Err(Error::InvalidConfig("run.checkpoints is empty".into()));
            }
            if let Some(bad) = cps.iter().find(|&&k| k == 0 || k > run.episodes) {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint {bad} outside [1, {}]",
                    run.episodes
                )));
            }
        }
        if run.checkpoint_base < 2 {
            return Err(Error::InvalidConfig("run.checkpoint_base must be at least 2".into()));
        }
        let is_bandit = matches!(self.env, EnvSpec::Bandit { .. });
        if run.methods.contains(&Method::Mab) && !is_bandit {
            return Err(Error::InvalidConfig("method \"mab\" needs a bandit environment".into()));
        }
        Ok(())
    }

    /// Sorted, deduplicated checkpoint episodes.
    pub fn checkpoints(&self) -> Vec<usize> {
        let mut cps = match &self.run.checkpoints {
            Some(cps) => cps.clone(),
            None => geometric_checkpoints(self.run.episodes, self.run.checkpoint_base),
        };
        cps.sort_unstable();
        cps.dedup();
        cps
    }
}

/// An environment ready for a run.
#[derive(Debug, Clone)]
pub struct BuiltEnvironment {
    pub env: Environment,
    /// `ρ` the generator was asked for, if any.
    pub generator_rho: Option<f64>,
    /// Grid World draws rejected for violating the gap condition.
    pub rejections: Option<usize>,
}

pub fn build_environment(spec: &EnvSpec) -> Result<BuiltEnvironment> {
    Ok(match spec {
        EnvSpec::Hard(params) => {
            let inst = hard_instance_with(params)?;
            BuiltEnvironment {
                env: Environment::new(inst.mdp, inst.reward).with_layout(inst.layout),
                generator_rho: Some(params.rho),
                rejections: None,
            }
        }
        EnvSpec::Gridworld {
            states,
            actions,
            horizon,
            rho,
            seed,
        } => {
            let world = random_gridworld(*horizon, *states, *actions, *rho, *seed)?;
            BuiltEnvironment {
                env: Environment::new(world.mdp, world.reward).with_layout(world.layout),
                generator_rho: Some(*rho),
                rejections: Some(world.rejections),
            }
        }
        EnvSpec::Bandit { means } => {
            let (mdp, reward) = bandit_as_mdp(means)?;
            let mut layout = Layout::new();
            layout.insert("arms".into(), (0..means.len()).collect());
            BuiltEnvironment {
                env: Environment::new(mdp, reward).with_layout(layout),
                generator_rho: None,
                rejections: None,
            }
        }
        EnvSpec::File { path } => BuiltEnvironment {
            env: Environment::load(path)?,
            generator_rho: None,
            rejections: None,
        },
    })
}

/// Budget and Theorem-3 tag of one simulator checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatorBudget {
    pub checkpoint_k: usize,
    pub samples_per_pair: usize,
    pub total_samples: u64,
    /// `total_samples ≥ T*`.
    pub above_bound: bool,
}

/// Everything needed to interpret and reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub rho: f64,
    pub iota: f64,
    /// Minimum positive gap over reachable `(h, x)`; `None` when every
    /// action is optimal everywhere.
    pub gap_min: Option<f64>,
    /// The same over all `(h, x)`, reachable or not.
    pub gap_min_all: Option<f64>,
    pub rho_satisfied: bool,
    pub rejections: Option<usize>,
    pub optimal_value: f64,
    pub checkpoints: Vec<usize>,
    /// Simulator sample bound `T*` for this environment, `ρ` and `δ`.
    pub simulator_bound: u64,
    #[serde(default)]
    pub simulator_budgets: Vec<SimulatorBudget>,
    /// Constant `c` of the `c/√k` reference per method, anchored at the
    /// first checkpoint.
    pub reference_constants: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub results: Vec<ResultRow>,
}

/// Runs `config` and writes the results directory `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    let built = build_environment(&config.env)?;
    let env = &built.env;
    let mdp = &env.mdp;
    let reward = env.reward(config.run.reward.as_deref())?;
    let dims = Dims::of(mdp);

    let rho = resolve_rho(config, built.generator_rho, dims.horizon)?;
    let report = dp::gaps(mdp, reward, Some(rho))?;
    let optimal_value = dp::optimal_values(mdp, reward)?.v(0, mdp.initial_state());
    let mut warnings = Vec::new();
    if rho > report.gap_min {
        let msg = format!(
            "rho = {rho} exceeds the minimum gap {}; the fast rate is not guaranteed",
            report.gap_min
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let checkpoints = config.checkpoints();
    let explore_cfg = ExplorationConfig::new(rho, config.run.episodes, config.run.delta, config.run.bonus, config.run.seed);

    let outcomes: Vec<MethodOutcome> = config
        .run
        .methods
        .par_iter()
        .map(|&method| run_method(method, config, &explore_cfg, mdp, reward, &checkpoints, rho))
        .collect::<Result<_>>()?;

    fs::create_dir_all(out_dir)?;
    env.save(&out_dir.join("env.json"))?;

    let mut results = Vec::new();
    let mut reference_constants = Vec::new();
    let mut reference_rows = Vec::new();
    let mut series = Vec::new();
    let mut simulator_budgets = Vec::new();
    for outcome in &outcomes {
        let name = outcome.method.name();
        if let Some(history) = &outcome.history {
            let file = match outcome.method {
                Method::Gap => "history.csv".to_string(),
                other => format!("history_{}.csv", other.name()),
            };
            save_history(history, &out_dir.join(file))?;
        }
        simulator_budgets.extend(outcome.budgets.iter().copied());
        let curve: Vec<(usize, f64)> = outcome.rows.iter().map(|r| (r.checkpoint_k, r.planning_error)).collect();
        let reference = minimax_reference(&curve)?;
        reference_constants.push((name.to_string(), reference_constant(&curve)?));
        reference_rows.extend(reference.iter().map(|&(k, v)| (name, k, v)));
        series.push(Series::solid(name, &curve));
        series.push(Series::dashed(&format!("{name} √k reference"), &reference));
        results.extend(outcome.rows.iter().cloned());
    }

    write_method_results(&results, fs::File::create(out_dir.join(RESULTS_FILE))?)?;
    write_reference(&reference_rows, &out_dir.join("reference.csv"))?;
    fs::write(
        out_dir.join("errors.svg"),
        render_loglog(&series, "planning error vs episodes", "episodes k", "planning error"),
    )?;

    let manifest = Manifest {
        config: config.clone(),
        rho,
        iota: iota(dims, config.run.episodes, config.run.delta),
        gap_min: report.gap_min.is_finite().then_some(report.gap_min),
        gap_min_all: report.gap_min_all.is_finite().then_some(report.gap_min_all),
        rho_satisfied: report.rho_satisfied.unwrap_or(true),
        rejections: built.rejections,
        optimal_value,
        checkpoints,
        simulator_bound: simulator_sample_bound(dims.horizon, dims.states, dims.actions, rho, config.run.delta),
        simulator_budgets,
        reference_constants,
        warnings,
    };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;

    Ok(RunOutput {
        dir: out_dir.to_path_buf(),
        manifest,
        results,
    })
}

/// Re-runs the config stored in a manifest.
pub fn run_from_manifest(manifest_path: &Path, out_dir: &Path) -> Result<RunOutput> {
    run_experiment(&Manifest::load(manifest_path)?.config, out_dir)
}

fn resolve_rho(config: &ExperimentConfig, generator_rho: Option<f64>, horizon: usize) -> Result<f64> {
    let rho = match (config.run.preset, config.run.epsilon, config.run.rho) {
        (Some(Preset::Agnostic), Some(eps), _) => eps / horizon as f64,
        (_, _, Some(rho)) => rho,
        _ => generator_rho.ok_or_else(|| {
            Error::InvalidConfig("run.rho is required for this environment".into())
        })?,
    };
    if !(rho > 0.0) {
        return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    Ok(rho)
}

struct MethodOutcome {
    method: Method,
    rows: Vec<ResultRow>,
    history: Option<History>,
    budgets: Vec<SimulatorBudget>,
}

fn run_method(
    method: Method,
    config: &ExperimentConfig,
    explore_cfg: &ExplorationConfig,
    mdp: &TabularMdp,
    reward: &RewardFn,
    checkpoints: &[usize],
    rho: f64,
) -> Result<MethodOutcome> {
    let tag = |k: usize, err: f64, size: usize, opt: f64| ResultRow {
        method: method.name().to_string(),
        checkpoint_k: k,
        planning_error: err,
        mixture_size: size,
        optimal_value: opt,
    };
    match method {
        Method::Gap | Method::Unclipped => {
            let cfg = ExplorationConfig {
                clipped: method == Method::Gap,
                ..explore_cfg.clone()
            };
            let (history, _) = explore(mdp, &cfg)?;
            let planned = plan(&history, reward, config.run.delta, checkpoints, config.run.plan_mode)?;
            let rows = evaluate(&planned, mdp, reward)?
                .into_iter()
                .map(|e| tag(e.checkpoint_k, e.planning_error, e.mixture_size, e.optimal_value))
                .collect();
            Ok(MethodOutcome {
                method,
                rows,
                history: Some(history),
                budgets: Vec::new(),
            })
        }
        Method::Simulator => {
            let dims = Dims::of(mdp);
            let bound = simulator_sample_bound(dims.horizon, dims.states, dims.actions, rho, config.run.delta);
            let optimal = dp::optimal_values(mdp, reward)?.v(0, mdp.initial_state());
            let scored: Vec<(ResultRow, SimulatorBudget)> = checkpoints
                .par_iter()
                .map(|&k| {
                    // Same number of transitions as k exploration episodes.
                    let n = (k * dims.horizon / (dims.states * dims.actions)).max(1);
                    let mut rng = stream_rng(config.run.seed, SIMULATOR_STREAM + k as u64);
                    let out = simulator_uniform(mdp, reward, n, &mut rng)?;
                    let value = dp::initial_value(mdp, reward, &out.policy)?;
                    let total = (n * dims.states * dims.actions) as u64;
                    Ok((
                        tag(k, (optimal - value).max(0.0), 1, optimal),
                        SimulatorBudget {
                            checkpoint_k: k,
                            samples_per_pair: n,
                            total_samples: total,
                            above_bound: total >= bound,
                        },
                    ))
                })
                .collect::<Result<_>>()?;
            let (rows, budgets) = scored.into_iter().unzip();
            Ok(MethodOutcome {
                method,
                rows,
                history: None,
                budgets,
            })
        }
        Method::Mab => {
            let EnvSpec::Bandit { means } = &config.env else {
                return Err(Error::InvalidConfig("method \"mab\" needs a bandit environment".into()));
            };
            let bandit = BernoulliBandit::new(means.clone())?;
            let best = bandit.best_mean();
            let rows = checkpoints
                .par_iter()
                .map(|&k| {
                    // One episode is one pull; every arm is pulled at least once.
                    let budget = k.max(bandit.arms());
                    let mut rng = stream_rng(config.run.seed, MAB_STREAM + k as u64);
                    let out = mab_uniform_explore(&bandit, budget, &mut rng)?;
                    Ok(tag(k, best - means[out.arm], 1, best))
                })
                .collect::<Result<_>>()?;
            Ok(MethodOutcome {
                method,
                rows,
                history: None,
                budgets: Vec::new(),
            })
        }
    }
}

fn write_reference(rows: &[(&str, usize, f64)], path: &Path) -> Result<()> {
    let mut csv = csv::Writer::from_path(path)?;
    csv.write_record(["method", "checkpoint_k", "reference"])?;
    for (method, k, v) in rows {
        csv.serialize((method, k, v))?;
    }
    csv.flush()?;
    Ok(())
}

/// `c = error(k₀) · √k₀` at the first point of the curve.
fn reference_constant(curve: &[(usize, f64)]) -> Result<f64> {
    let &(k0, e0) = curve.first().ok_or(Error::EmptyCurve)?;
    Ok(e0 * (k0 as f64).sqrt())
}

/// `c / √k` at every `k` of `curve`, anchored so that it equals the curve at
/// its first point.
pub fn minimax_reference(curve: &[(usize, f64)]) -> Result<Vec<(usize, f64)>> {
    let &(k0, _) = curve.first().ok_or(Error::EmptyCurve)?;
    minimax_reference_at(curve, k0)
}

/// [`minimax_reference`] anchored at checkpoint `k0`, which must be on the
/// curve.
pub fn minimax_reference_at(curve: &[(usize, f64)], k0: usize) -> Result<Vec<(usize, f64)>> {
    if curve.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let &(_, e0) = curve
        .iter()
        .find(|(k, _)| *k == k0)
        .ok_or_else(|| Error::InvalidConfig(format!("no checkpoint at k = {k0}")))?;
    let c = e0 * (k0 as f64).sqrt();
    Ok(curve
        .iter()
        .map(|&(k, _)| (k, if k == k0 { e0 } else { c / (k as f64).sqrt() }))
        .collect())
}

/// Least-squares slope of `ln error` against `ln k` over the points with
/// `k ∈ [window.0, window.1]`. Points with non-positive error have no
/// logarithm and are skipped.
pub fn fit_slope(curve: &[(usize, f64)], window: (usize, usize)) -> Result<f64> {
    let points: Vec<(f64, f64)> = curve
        .iter()
        .filter(|&&(k, e)| k >= window.0 && k <= window.1 && e > 0.0)
        .map(|&(k, e)| ((k as f64).ln(), e.ln()))
        .collect();
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::TooFewPoints(1));
    }
    Ok(sxy / sxx)
}

/// `(k, error)` pairs of one method from a results table.
pub fn curve_of(results: &[ResultRow], method: &str) -> Vec<(usize, f64)> {
    results
        .iter()
        .filter(|r| r.method == method)
        .map(|r| (r.checkpoint_k, r.planning_error))
        .collect()
}

//! On-disk formats.
//!
//! * Environment: JSON object with `S`, `A`, `H`, `x1`, the nested kernel
//!   `P[x][a][y]`, a list of named rewards `r[h][x][a]` and an optional
//!   role → states `layout`. Floats are written in shortest round-trip form.
//! * History: CSV `episode,step,state,action,next_state`, one row per step.
//!   Episodes and steps count from 1; states and actions from 0.
//! * Results: CSV `checkpoint_k,planning_error,mixture_size,optimal_value`,
//!   optionally prefixed by a `method` column.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::Layout;
use crate::error::{Error, Result};
use crate::mdp::{History, RewardFn, TabularMdp, Trajectory};
use crate::plan::CheckpointError;

/// An MDP together with the rewards that may be revealed for it.
#[derive(Debug, Clone)]
pub struct Environment {
    pub mdp: TabularMdp,
    pub rewards: Vec<(String, RewardFn)>,
    pub layout: Option<Layout>,
}

impl Environment {
    pub fn new(mdp: TabularMdp, reward: RewardFn) -> Self {
        Self {
            mdp,
            rewards: vec![("default".to_string(), reward)],
            layout: None,
        }
    }

    pub fn with_layout(mut self, layout: Layout) -> Self {
        self.layout = Some(layout);
        self
    }

    /// The reward called `name`, or the first one when `name` is `None`.
    pub fn reward(&self, name: Option<&str>) -> Result<&RewardFn> {
        match name {
            None => self
                .rewards
                .first()
                .map(|(_, r)| r)
                .ok_or_else(|| Error::UnknownReward("<none>".to_string())),
            Some(name) => self
                .rewards
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, r)| r)
                .ok_or_else(|| Error::UnknownReward(name.to_string())),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EnvFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<EnvFile>(text)?.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = BufWriter::new(File::create(path)?);
        file.write_all(self.to_json()?.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(file.flush()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EnvFile {
    #[serde(rename = "S")]
    states: usize,
    #[serde(rename = "A")]
    actions: usize,
    #[serde(rename = "H")]
    horizon: usize,
    x1: usize,
    #[serde(rename = "P")]
    transition: Vec<Vec<Vec<f64>>>,
    rewards: Vec<NamedReward>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layout: Option<Layout>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedReward {
    name: String,
    r: Vec<Vec<Vec<f64>>>,
}

impl From<&Environment> for EnvFile {
    fn from(env: &Environment) -> Self {
        let mdp = &env.mdp;
        let (s, a_n, h) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        let transition = (0..s)
            .map(|x| (0..a_n).map(|a| mdp.row(x, a).to_vec()).collect())
            .collect();
        let rewards = env
            .rewards
            .iter()
            .map(|(name, r)| NamedReward {
                name: name.clone(),
                r: (0..h)
                    .map(|t| (0..s).map(|x| (0..a_n).map(|a| r.get(t, x, a)).collect()).collect())
                    .collect(),
            })
            .collect();
        Self {
            states: s,
            actions: a_n,
            horizon: h,
            x1: mdp.initial_state(),
            transition,
            rewards,
            layout: env.layout.clone(),
        }
    }
}

impl TryFrom<EnvFile> for Environment {
    type Error = Error;

    fn try_from(file: EnvFile) -> Result<Self> {
        let mdp = TabularMdp::from_nested(file.horizon, file.x1, &file.transition)?;
        if (mdp.num_states(), mdp.num_actions()) != (file.states, file.actions) {
            return Err(Error::ShapeMismatch(format!(
                "declared S={}, A={} but P is {}x{}",
                file.states,
                file.actions,
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        let mut rewards = Vec::with_capacity(file.rewards.len());
        for named in file.rewards {
            let reward = RewardFn::from_nested(&named.r)?;
            mdp.check_reward(&reward)?;
            rewards.push((named.name, reward));
        }
        Ok(Self {
            mdp,
            rewards,
            layout: file.layout,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct HistoryRow {
    episode: usize,
    step: usize,
    state: usize,
    action: usize,
    next_state: usize,
}

pub fn write_history<W: Write>(history: &History, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for (k, traj) in history.trajectories.iter().enumerate() {
        for (h, (state, action, next_state)) in traj.transitions().enumerate() {
            csv.serialize(HistoryRow {
                episode: k + 1,
                step: h + 1,
                state,
                action,
                next_state,
            })?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn read_history<R: Read>(reader: R) -> Result<History> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut history = History::new();
    let mut current: Option<(usize, Trajectory)> = None;
    for row in csv.deserialize::<HistoryRow>() {
        let row = row?;
        match &mut current {
            Some((episode, traj)) if *episode == row.episode => {
                if row.step != traj.len() + 1 || row.state != traj.terminal_state {
                    return Err(Error::ShapeMismatch(format!(
                        "episode {} breaks at step {}",
                        row.episode, row.step
                    )));
                }
                traj.steps.push((row.state, row.action));
                traj.terminal_state = row.next_state;
            }
            _ => {
                if row.step != 1 || row.episode != history.episodes() + current.is_some() as usize + 1 {
                    return Err(Error::ShapeMismatch(format!(
                        "unexpected row episode={} step={}",
                        row.episode, row.step
                    )));
                }
                if let Some((_, done)) = current.take() {
                    history.push(done);
                }
                current = Some((
                    row.episode,
                    Trajectory {
                        steps: vec![(row.state, row.action)],
                        terminal_state: row.next_state,
                    },
                ));
            }
        }
    }
    if let Some((_, done)) = current {
        history.push(done);
    }
    let horizon = history.horizon();
    if history.trajectories.iter().any(|t| Some(t.len()) != horizon) {
        return Err(Error::ShapeMismatch("trajectories differ in length".to_string()));
    }
    Ok(history)
}

pub fn save_history(history: &History, path: &Path) -> Result<()> {
    write_history(history, BufWriter::new(File::create(path)?))
}

pub fn load_history(path: &Path) -> Result<History> {
    read_history(BufReader::new(File::open(path)?))
}

/// One results row, tagged by method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub checkpoint_k: usize,
    pub planning_error: f64,
    pub mixture_size: usize,
    pub optimal_value: f64,
}

/// Plain results without the method column.
pub fn write_results<W: Write>(rows: &[CheckpointError], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<CheckpointError>> {
    let mut csv = csv::Reader::from_reader(reader);
    Ok(csv.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_method_results<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_method_results<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut csv = csv::Reader::from_reader(reader);
    Ok(csv.deserialize().collect::<std::result::Result<_, _>>()?)
}

//! Benchmark environments: the lower-bound hard instance, the random Grid
//! World and multi-armed bandits viewed as one-step MDPs.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dp;
use crate::error::{Error, Result};
use crate::mdp::{RewardFn, TabularMdp};
use crate::stream_rng;

/// Role name → state indices. Written next to the environment file.
pub type Layout = BTreeMap<String, Vec<usize>>;

/// How the routing tree of [`hard_instance`] moves between levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TreeRouting {
    /// Every action moves to a child with probability proportional to the
    /// number of leaves below it, so each green state is reached w.p. `1/S`
    /// and tree actions carry no gap.
    #[default]
    Uniform,
    /// Action `a` moves deterministically to child `a` (modulo the number of
    /// children). Tree nodes then have gaps of order `ε`.
    ActionIndexed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceParams {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub rho: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub routing: TreeRouting,
    /// Leaf slots of the Type I and Type II models.
    #[serde(default = "default_slots")]
    pub special_slots: (usize, usize),
}

fn default_slots() -> (usize, usize) {
    (0, 1)
}

impl HardInstanceParams {
    pub fn new(states: usize, actions: usize, horizon: usize, rho: f64, epsilon: f64) -> Self {
        Self {
            states,
            actions,
            horizon,
            rho,
            epsilon,
            routing: TreeRouting::Uniform,
            special_slots: default_slots(),
        }
    }
}

/// The generated hard instance and where everything lives.
#[derive(Debug, Clone)]
pub struct HardInstance {
    pub mdp: TabularMdp,
    pub reward: RewardFn,
    pub layout: Layout,
    /// Depth `d = ⌈log_A S⌉` of the routing tree.
    pub depth: usize,
    pub tree_nodes: usize,
    /// `green[i]` and `left_orange[i]` belong to leaf slot `i`.
    pub green: Vec<usize>,
    pub left_orange: Vec<usize>,
    pub right_orange: usize,
    pub left_blue: usize,
    pub right_blue: usize,
    pub type_i: usize,
    pub type_ii: usize,
}

/// Convenience wrapper with uniform routing and default slots.
pub fn hard_instance(states: usize, actions: usize, horizon: usize, rho: f64, epsilon: f64) -> Result<HardInstance> {
    hard_instance_with(&HardInstanceParams::new(states, actions, horizon, rho, epsilon))
}

/// Layered lower-bound MDP.
///
/// A routing tree of depth `d` leads from the root `x_1` to `S` green states,
/// one per bandit model. From green, every action reaches that model's left
/// orange state w.p. `ε/ρ` and the absorbing right orange state otherwise.
/// At left orange, action 0 of the Type I (Type II) model reaches the left
/// blue state w.p. `½ + ρ/2H` (`½ + ρ/H`); everything else is a fair coin
/// between left and right blue. Both blue states are absorbing and left blue
/// pays 1 per step. The horizon is `d + 2 + H`, so reaching left blue is
/// worth exactly `H`.
///
/// State layout: tree nodes (root first), greens, left oranges, then
/// right orange, left blue, right blue. The three absorbing states are shared
/// by all models.
pub fn hard_instance_with(params: &HardInstanceParams) -> Result<HardInstance> {
    let HardInstanceParams {
        states: s,
        actions: a_n,
        horizon: h,
        rho,
        epsilon,
        routing,
        special_slots: (slot_i, slot_ii),
    } = *params;
    if s < 2 || a_n < 2 || h < 2 {
        return Err(Error::InfeasibleParams(format!(
            "need S >= 2, A >= 2, H >= 2, got S={s}, A={a_n}, H={h}"
        )));
    }
    if !(rho > 0.0) || rho / h as f64 > 0.5 {
        return Err(Error::InfeasibleParams(format!(
            "rho must lie in (0, H/2], got {rho}"
        )));
    }
    if !(epsilon > 0.0) || epsilon / rho > 1.0 {
        return Err(Error::InfeasibleParams(format!(
            "need 0 < epsilon/rho <= 1, got epsilon={epsilon}, rho={rho}"
        )));
    }
    if slot_i == slot_ii || slot_i >= s || slot_ii >= s {
        return Err(Error::InfeasibleParams(format!(
            "special slots {:?} must be distinct and below S={s}",
            (slot_i, slot_ii)
        )));
    }

    let mut depth = 0;
    let mut width = 1usize;
    while width < s {
        width = width.saturating_mul(a_n);
        depth += 1;
    }

    // Internal node (level, i) covers leaves [i * A^(d-level), (i+1) * A^(d-level)) ∩ [0, S).
    let span = |level: usize| a_n.pow((depth - level) as u32);
    let mut level_offsets = Vec::with_capacity(depth);
    let mut tree_nodes = 0;
    for level in 0..depth {
        level_offsets.push(tree_nodes);
        tree_nodes += s.div_ceil(span(level));
    }
    let green_base = tree_nodes;
    let orange_base = green_base + s;
    let right_orange = orange_base + s;
    let left_blue = right_orange + 1;
    let right_blue = left_blue + 1;
    let num_states = right_blue + 1;
    let horizon = depth + 2 + h;

    let mut p = vec![0.0; num_states * a_n * num_states];
    let mut set = |x: usize, a: usize, y: usize, prob: f64| {
        p[(x * a_n + a) * num_states + y] += prob;
    };

    for level in 0..depth {
        let child_span = span(level + 1);
        for i in 0..s.div_ceil(span(level)) {
            let node = level_offsets[level] + i;
            // (state index, leaves below) for each existing child.
            let children: Vec<(usize, usize)> = (0..a_n)
                .map(|c| i * a_n + c)
                .filter(|&j| j * child_span < s)
                .map(|j| {
                    let leaves = ((j + 1) * child_span).min(s) - j * child_span;
                    let index = if level + 1 == depth {
                        green_base + j
                    } else {
                        level_offsets[level + 1] + j
                    };
                    (index, leaves)
                })
                .collect();
            let covered: usize = children.iter().map(|&(_, n)| n).sum();
            for a in 0..a_n {
                match routing {
                    TreeRouting::Uniform => {
                        for &(child, leaves) in &children {
                            set(node, a, child, leaves as f64 / covered as f64);
                        }
                    }
                    TreeRouting::ActionIndexed => set(node, a, children[a % children.len()].0, 1.0),
                }
            }
        }
    }

    let reach = epsilon / rho;
    let hf = h as f64;
    for slot in 0..s {
        let (green, orange) = (green_base + slot, orange_base + slot);
        for a in 0..a_n {
            set(green, a, orange, reach);
            set(green, a, right_orange, 1.0 - reach);
            let to_left = match (a, slot) {
                (0, k) if k == slot_i => 0.5 + rho / (2.0 * hf),
                (0, k) if k == slot_ii => 0.5 + rho / hf,
                _ => 0.5,
            };
            set(orange, a, left_blue, to_left);
            set(orange, a, right_blue, 1.0 - to_left);
        }
    }
    for sink in [right_orange, left_blue, right_blue] {
        for a in 0..a_n {
            set(sink, a, sink, 1.0);
        }
    }

    let mdp = TabularMdp::new(num_states, a_n, horizon, 0, p)?;
    let reward = RewardFn::from_fn(horizon, num_states, a_n, |_, x, _| if x == left_blue { 1.0 } else { 0.0 })?;

    let green: Vec<usize> = (green_base..orange_base).collect();
    let left_orange: Vec<usize> = (orange_base..right_orange).collect();
    let mut layout = Layout::new();
    layout.insert("tree".into(), (0..tree_nodes).collect());
    layout.insert("green".into(), green.clone());
    layout.insert("left_orange".into(), left_orange.clone());
    layout.insert("right_orange".into(), vec![right_orange]);
    layout.insert("left_blue".into(), vec![left_blue]);
    layout.insert("right_blue".into(), vec![right_blue]);
    layout.insert("type_i".into(), vec![green[slot_i], left_orange[slot_i]]);
    layout.insert("type_ii".into(), vec![green[slot_ii], left_orange[slot_ii]]);

    Ok(HardInstance {
        mdp,
        reward,
        layout,
        depth,
        tree_nodes,
        green,
        left_orange,
        right_orange,
        left_blue,
        right_blue,
        type_i: slot_i,
        type_ii: slot_ii,
    })
}

/// The random Grid World and its generation record.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub mdp: TabularMdp,
    pub reward: RewardFn,
    pub layout: Layout,
    pub start: usize,
    pub goal: usize,
    pub special_action: usize,
    /// Generated instances discarded because their gap fell below `ρ`.
    pub rejections: usize,
    pub gap_min: f64,
}

/// Resampling budget for the gap condition.
const MAX_GRIDWORLD_ATTEMPTS: usize = 1000;

/// Random Grid World with a single rewarding state.
///
/// The start `x_0 = 0` can never be re-entered. The goal `x*` is only entered
/// through the special action `a*`: from `x_0` w.p. `ρ`, and from `x*` w.p. 1.
/// All remaining entries start as Uniform(0, 1) draws and every row is then
/// normalized. Reward is 1 at `x*` for every action and step.
///
/// Instances whose gap falls below `ρ` are discarded and redrawn from the
/// next random stream.
pub fn random_gridworld(horizon: usize, states: usize, actions: usize, rho: f64, seed: u64) -> Result<GridWorld> {
    if states < 2 || actions < 1 || horizon < 1 {
        return Err(Error::InfeasibleParams(format!(
            "grid world needs S >= 2, A >= 1, H >= 1, got S={states}, A={actions}, H={horizon}"
        )));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InfeasibleParams(format!("rho must lie in (0, 1], got {rho}")));
    }
    for attempt in 0..MAX_GRIDWORLD_ATTEMPTS {
        let mut world = draw_gridworld(horizon, states, actions, rho, seed, attempt as u64)?;
        let report = dp::gaps(&world.mdp, &world.reward, Some(rho))?;
        if report.rho_satisfied == Some(true) {
            world.rejections = attempt;
            world.gap_min = report.gap_min;
            return Ok(world);
        }
    }
    Err(Error::InfeasibleParams(format!(
        "no grid world with gap >= {rho} in {MAX_GRIDWORLD_ATTEMPTS} draws"
    )))
}

fn draw_gridworld(horizon: usize, s: usize, a_n: usize, rho: f64, seed: u64, attempt: u64) -> Result<GridWorld> {
    let mut rng = stream_rng(seed, attempt);
    let start = 0;
    let goal = rng.gen_range(1..s);
    let special = rng.gen_range(0..a_n);

    let mut p = Vec::with_capacity(s * a_n * s);
    for x in 0..s {
        for a in 0..a_n {
            // Draw the full row first so the stream layout does not depend
            // on which entries are later forced.
            let mut row: Vec<f64> = (0..s).map(|_| open_unit(&mut rng)).collect();
            row[start] = 0.0;
            let goal_mass = match (x, a) {
                (x, a) if x == goal && a == special => 1.0,
                (x, a) if x == start && a == special => rho,
                _ => 0.0,
            };
            row[goal] = 0.0;
            let rest: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v *= (1.0 - goal_mass) / rest;
            }
            row[goal] = goal_mass;
            p.extend(row);
        }
    }
    let mdp = TabularMdp::new(s, a_n, horizon, start, p)?;
    let reward = RewardFn::from_fn(horizon, s, a_n, |_, x, _| if x == goal { 1.0 } else { 0.0 })?;
    let mut layout = Layout::new();
    layout.insert("start".into(), vec![start]);
    layout.insert("goal".into(), vec![goal]);
    layout.insert("special_action".into(), vec![special]);
    Ok(GridWorld {
        mdp,
        reward,
        layout,
        start,
        goal,
        special_action: special,
        rejections: 0,
        gap_min: f64::INFINITY,
    })
}

/// Uniform draw from the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// A bandit with arm means `means` as a one-state, one-step MDP.
pub fn bandit_as_mdp(means: &[f64]) -> Result<(TabularMdp, RewardFn)> {
    if means.is_empty() {
        return Err(Error::InfeasibleParams("bandit needs at least one arm".to_string()));
    }
    let mdp = TabularMdp::new(1, means.len(), 1, 0, vec![1.0; means.len()])?;
    let reward = RewardFn::new(1, 1, means.len(), means.to_vec())?;
    Ok((mdp, reward))
}

/// Dense random MDP: rows and rewards are independent Uniform(0, 1) draws,
/// rows normalized, `x_1 = 0`.
pub fn random_mdp<R: Rng + ?Sized>(
    states: usize,
    actions: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<(TabularMdp, RewardFn)> {
    let mut p = Vec::with_capacity(states * actions * states);
    for _ in 0..states * actions {
        let row: Vec<f64> = (0..states).map(|_| open_unit(rng)).collect();
        let total: f64 = row.iter().sum();
        p.extend(row.iter().map(|v| v / total));
    }
    let mdp = TabularMdp::new(states, actions, horizon, 0, p)?;
    let reward = RewardFn::from_fn(horizon, states, actions, |_, _, _| rng.gen())?;
    Ok((mdp, reward))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{gaps, optimal_values};

    #[test]
    fn hard_instance_layout_and_budget() {
        let inst = hard_instance(5, 2, 8, 0.1, 0.05).unwrap();
        assert_eq!(inst.depth, 3);
        // Levels hold 1, 2 and 3 nodes for 5 leaves in a binary tree.
        assert_eq!(inst.tree_nodes, 6);
        assert_eq!(inst.mdp.num_states(), 2 * 5 + inst.tree_nodes + 3);
        assert_eq!(inst.mdp.horizon(), 3 + 2 + 8);
        assert_eq!(inst.layout["green"].len(), 5);
    }

    #[test]
    fn hard_instance_gaps() {
        let inst = hard_instance(5, 2, 8, 0.1, 0.05).unwrap();
        let report = gaps(&inst.mdp, &inst.reward, Some(0.05)).unwrap();
        assert!((report.gap_min - 0.05).abs() < 1e-9, "{}", report.gap_min);
        let step = inst.depth + 1;
        let lo_ii = inst.left_orange[inst.type_ii];
        assert!((report.gap(step, lo_ii, 1) - 0.1).abs() < 1e-9);
        let lo_i = inst.left_orange[inst.type_i];
        assert!((report.gap(step, lo_i, 1) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn action_indexed_tree_has_epsilon_gaps() {
        let mut params = HardInstanceParams::new(5, 2, 8, 0.1, 0.05);
        params.routing = TreeRouting::ActionIndexed;
        let inst = hard_instance_with(&params).unwrap();
        let report = gaps(&inst.mdp, &inst.reward, None).unwrap();
        // Type I vs Type III leaves differ by (ε/ρ)·(ρ/2) = ε/2 at the tree.
        assert!((report.gap_min - 0.025).abs() < 1e-9, "{}", report.gap_min);
    }

    #[test]
    fn hard_instance_rejects_bad_params() {
        assert!(matches!(hard_instance(5, 2, 8, 0.1, 0.2), Err(Error::InfeasibleParams(_))));
        assert!(matches!(hard_instance(5, 2, 8, 5.0, 0.1), Err(Error::InfeasibleParams(_))));
        assert!(matches!(hard_instance(1, 2, 8, 0.1, 0.05), Err(Error::InfeasibleParams(_))));
    }

    #[test]
    fn placement_of_special_models_does_not_change_optimal_value() {
        let base = hard_instance(7, 3, 4, 0.2, 0.1).unwrap();
        let mut params = HardInstanceParams::new(7, 3, 4, 0.2, 0.1);
        params.special_slots = (5, 2);
        let moved = hard_instance_with(&params).unwrap();
        let v = |i: &HardInstance| optimal_values(&i.mdp, &i.reward).unwrap().v(0, 0);
        assert!((v(&base) - v(&moved)).abs() < 1e-12);
    }

    #[test]
    fn gridworld_constraints() {
        let world = random_gridworld(5, 10, 10, 0.4, 3).unwrap();
        let mdp = &world.mdp;
        for x in 0..10 {
            for a in 0..10 {
                assert_eq!(mdp.prob(x, a, world.start), 0.0);
                let expected_goal = if a == world.special_action && x == world.start {
                    0.4
                } else if a == world.special_action && x == world.goal {
                    1.0
                } else {
                    0.0
                };
                assert!((mdp.prob(x, a, world.goal) - expected_goal).abs() < 1e-15);
            }
        }
        assert!(world.gap_min >= 0.4);
    }

    #[test]
    fn gridworld_is_deterministic_per_seed() {
        let a = random_gridworld(4, 6, 3, 0.3, 11).unwrap();
        let b = random_gridworld(4, 6, 3, 0.3, 11).unwrap();
        assert_eq!(a.mdp, b.mdp);
        assert_ne!(a.mdp, random_gridworld(4, 6, 3, 0.3, 12).unwrap().mdp);
    }

    #[test]
    fn bandit_gaps() {
        let gm = |m: &[f64]| {
            let (mdp, r) = bandit_as_mdp(m).unwrap();
            gaps(&mdp, &r, None).unwrap().gap_min
        };
        assert_eq!(gm(&[1.0, 0.0]), 1.0);
        assert_eq!(gm(&[0.5, 0.5]), f64::INFINITY);
        assert!((gm(&[0.7, 0.5, 0.5]) - 0.2).abs() < 1e-12);
        assert!(bandit_as_mdp(&[]).is_err());
    }
}

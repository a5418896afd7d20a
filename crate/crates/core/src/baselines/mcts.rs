//! Receding-horizon UCT search over a fixed 9-action set.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::error::{Error, Result};
use crate::local_planner::{build_active_map, ActiveMap, evidence_magnitude, h_proxy, kinematics_step, Control, SensorSuite};
use crate::scalar::sigmoid;
use crate::sensors::RobotState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MctsConfig {
    /// Action surge/sway speed (m/s).
    pub v: f64,
    /// Action yaw rate (rad/s).
    pub omega: f64,
    /// Simulated steps per playout, tree plus default policy.
    pub rollout_depth: usize,
    pub exploration: f64,
    pub discount: f64,
    /// Playouts per decision.
    pub simulations: usize,
    /// Optional wall-clock cap per decision (s); off by default so decisions are reproducible.
    pub time_cap: Option<f64>,
    /// Weight of the coral-layer proxy entropy reduction.
    pub info_weight: f64,
    /// Pooling of the coral layer for the entropy term.
    pub pooling: usize,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self {
            v: 0.5,
            omega: 1.0,
            rollout_depth: 20,
            exploration: 1.0,
            discount: 0.95,
            simulations: 200,
            time_cap: None,
            info_weight: 0.1,
            pooling: 4,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rollout_depth == 0 || self.simulations == 0 || self.pooling == 0 {
            return Err(Error::Config("mcts rollout_depth, simulations and pooling must be ≥ 1".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) || self.exploration < 0.0 || self.info_weight < 0.0 {
            return Err(Error::Config("mcts discount must lie in (0, 1], exploration and info_weight ≥ 0".into()));
        }
        if self.time_cap.is_some_and(|c| c <= 0.0) {
            return Err(Error::Config("mcts time_cap must be > 0".into()));
        }
        Ok(())
    }

    /// `{[v,0,0], [0,±v,0], [v_d,±v_d,0], [v,0,±ω/2], [v,0,±ω]}` with `v_d = v/√2`.
    pub fn action_set(&self) -> [Control<f64>; 9] {
        let (v, w) = (self.v, self.omega);
        let vd = v * std::f64::consts::FRAC_1_SQRT_2;
        [
            Control::new(v, 0.0, 0.0),
            Control::new(0.0, v, 0.0),
            Control::new(0.0, -v, 0.0),
            Control::new(vd, vd, 0.0),
            Control::new(vd, -vd, 0.0),
            Control::new(v, 0.0, 0.5 * w),
            Control::new(v, 0.0, -0.5 * w),
            Control::new(v, 0.0, w),
            Control::new(v, 0.0, -w),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MctsDecision {
    pub control: Control<f64>,
    pub action: usize,
    pub simulations: usize,
    /// Mean discounted playout return at the root.
    pub root_value: f64,
    /// `(visits, mean return)` per root action.
    pub children: Vec<(u32, f64)>,
    /// No playout finished; the action was drawn at random.
    pub random_fallback: bool,
}

const N_ACTIONS: usize = 9;

struct Node {
    visits: u32,
    value_sum: f64,
    children: [u32; N_ACTIONS],
}

const NONE: u32 = u32::MAX;

impl Node {
    fn new() -> Self {
        Self { visits: 0, value_sum: 0.0, children: [NONE; N_ACTIONS] }
    }
}

/// Per-playout scratch: which cells were already swept and the updated coral confidences.
struct Scratch {
    stamp: u32,
    swept: Vec<u32>,
    lam_stamp: Vec<u32>,
    lam: Vec<f64>,
}

struct Reward<'a> {
    belief: &'a BeliefState<f64>,
    sensors: &'a SensorSuite<f64>,
    active: ActiveMap<f64>,
    info_weight: f64,
}

impl Reward<'_> {
    /// Expected new samples under the footprint plus the weighted entropy reduction.
    fn step(&self, x: &RobotState<f64>, sc: &mut Scratch) -> f64 {
        let g = &self.belief.grid;
        let (s, c) = x.theta.sin_cos();
        let half = 0.5 * self.sensors.dlc.side_len;
        let (rows, cols) = g.window(x.p, half * std::f64::consts::SQRT_2);
        let mut r = 0.0;
        for row in rows {
            for col in cols.clone() {
                let i = g.index(row, col);
                if sc.swept[i] == sc.stamp || self.belief.xi[i] {
                    continue;
                }
                let q = g.center(i);
                let (dx, dy) = (q[0] - x.p[0], q[1] - x.p[1]);
                if (c * dx + s * dy).abs() > half || (c * dy - s * dx).abs() > half {
                    continue;
                }
                sc.swept[i] = sc.stamp;
                r += sigmoid(self.belief.ell_c[i]);
            }
        }
        if self.info_weight > 0.0 {
            let flc = &self.sensors.flc;
            let cos_half = flc.half_fov().cos();
            let mut gain = 0.0;
            self.active.for_each_within(x.p, flc.r_max, |k| {
                let q = self.active.centers[k];
                let (dx, dy) = (q[0] - x.p[0], q[1] - x.p[1]);
                let d = dx.hypot(dy);
                if d > 0.0 && c * dx + s * dy < cos_half * d {
                    return;
                }
                let l = if sc.lam_stamp[k] == sc.stamp { sc.lam[k] } else { self.active.lambda_flc0[k] };
                let next = l + evidence_magnitude(d, flc);
                gain += h_proxy(l) - h_proxy(next);
                sc.lam_stamp[k] = sc.stamp;
                sc.lam[k] = next;
            });
            r += self.info_weight * gain;
        }
        r
    }
}

fn clamp_to_map(x: &mut RobotState<f64>, belief: &BeliefState<f64>) {
    let g = &belief.grid;
    x.p[0] = x.p[0].clamp(0.0, g.width_m - 1e-9);
    x.p[1] = x.p[1].clamp(0.0, g.height_m - 1e-9);
}

/// One UCT decision from `state`. Deterministic for a given rng state when `time_cap` is off.
pub fn mcts_plan<R: Rng + ?Sized>(
    state: &RobotState<f64>,
    belief: &BeliefState<f64>,
    sensors: &SensorSuite<f64>,
    cfg: &MctsConfig,
    dt: f64,
    rng: &mut R,
) -> Result<MctsDecision> {
    let started = Instant::now();
    let actions = cfg.action_set();
    let reward = Reward { belief, sensors, active: build_active_map(belief, cfg.pooling)?, info_weight: cfg.info_weight };
    let n_active = reward.active.len();
    let mut sc = Scratch { stamp: 0, swept: vec![0; belief.grid.len()], lam_stamp: vec![0; n_active], lam: vec![0.0; n_active] };

    let mut tree = vec![Node::new()];
    let mut best_return = 0.0f64;
    let mut path: Vec<(u32, usize)> = Vec::with_capacity(cfg.rollout_depth + 1);
    let mut rewards: Vec<f64> = Vec::with_capacity(cfg.rollout_depth);
    let mut done = 0;
    while done < cfg.simulations {
        if cfg.time_cap.is_some_and(|c| started.elapsed().as_secs_f64() >= c) {
            break;
        }
        sc.stamp += 1;
        path.clear();
        rewards.clear();
        path.push((0, 0));
        let mut x = *state;
        let mut node = 0u32;
        let mut expanded = false;
        while rewards.len() < cfg.rollout_depth && !expanded {
            let n = &tree[node as usize];
            let mut unvisited = [0usize; N_ACTIONS];
            let mut n_unvisited = 0;
            for a in (0..N_ACTIONS).filter(|&a| n.children[a] == NONE) {
                unvisited[n_unvisited] = a;
                n_unvisited += 1;
            }
            let a = if n_unvisited > 0 {
                expanded = true;
                unvisited[rng.random_range(0..n_unvisited)]
            } else {
                let ln_n = (n.visits.max(1) as f64).ln();
                let c = cfg.exploration * best_return.max(1e-9);
                let mut best = (f64::NEG_INFINITY, 0);
                for (a, &ch) in n.children.iter().enumerate() {
                    let child = &tree[ch as usize];
                    let nv = child.visits.max(1) as f64;
                    let score = child.value_sum / nv + c * (ln_n / nv).sqrt();
                    if score > best.0 {
                        best = (score, a);
                    }
                }
                best.1
            };
            let child = if expanded {
                tree.push(Node::new());
                let id = (tree.len() - 1) as u32;
                tree[node as usize].children[a] = id;
                id
            } else {
                tree[node as usize].children[a]
            };
            x = kinematics_step(&x, &actions[a], dt);
            clamp_to_map(&mut x, belief);
            rewards.push(reward.step(&x, &mut sc));
            node = child;
            path.push((node, rewards.len()));
        }
        while rewards.len() < cfg.rollout_depth {
            let a = rng.random_range(0..N_ACTIONS);
            x = kinematics_step(&x, &actions[a], dt);
            clamp_to_map(&mut x, belief);
            rewards.push(reward.step(&x, &mut sc));
        }
        // discounted return from each depth onward
        let mut tail = vec![0.0; rewards.len() + 1];
        for d in (0..rewards.len()).rev() {
            tail[d] = rewards[d] + cfg.discount * tail[d + 1];
        }
        best_return = best_return.max(tail[0]);
        for &(id, depth) in &path {
            let n = &mut tree[id as usize];
            n.visits += 1;
            // credited with the return from the action that led into it
            n.value_sum += tail[depth.saturating_sub(1)];
        }
        done += 1;
    }

    let root = &tree[0];
    let children: Vec<(u32, f64)> = root
        .children
        .iter()
        .map(|&c| if c == NONE { (0, 0.0) } else { (tree[c as usize].visits, tree[c as usize].value_sum / tree[c as usize].visits.max(1) as f64) })
        .collect();
    if done == 0 {
        let a = rng.random_range(0..N_ACTIONS);
        return Ok(MctsDecision { control: actions[a], action: a, simulations: 0, root_value: 0.0, children, random_fallback: true });
    }
    let max_visits = children.iter().map(|c| c.0).max().unwrap_or(0);
    let ties: Vec<usize> = (0..N_ACTIONS).filter(|&a| children[a].0 == max_visits).collect();
    let a = ties[rng.random_range(0..ties.len())];
    Ok(MctsDecision {
        control: actions[a],
        action: a,
        simulations: done,
        root_value: root.value_sum / root.visits.max(1) as f64,
        children,
        random_fallback: false,
    })
}

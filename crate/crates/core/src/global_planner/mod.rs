//! Event-triggered strategic planner: adaptive region graph, GP reward field, UCB node
//! scores and a budgeted orienteering route whose first node becomes the next target.

mod gp;
mod graph;
mod op;

pub use gp::{gp_fit, gp_predict, GpDatum, GpModel, GpParams};
pub use graph::{GraphNode, NodeLevel, SpatialGraph};
pub use op::{greedy_route, route_length, solve_op, IlsConfig, OpInstance, Route};

use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sensors::RobotState;
use crate::world::Rect;

/// Shortest local budget handed out, in seconds.
pub const MIN_T_LOCAL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalConfig {
    pub macro_size: f64,
    pub micro_size: f64,
    /// Time-allocation factor `c` mapping seconds to meters of route budget.
    pub time_factor: f64,
    /// UCB exploration weight β.
    pub beta: f64,
    /// Mean substrate entropy (nats) below which a macro region is refined.
    pub h_split: f64,
    pub gp: GpParams<f64>,
    pub ils: IlsConfig,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            macro_size: 4.0,
            micro_size: 2.0,
            time_factor: 6.0,
            beta: 0.6,
            h_split: 0.35,
            gp: GpParams::default(),
            ils: IlsConfig::default(),
        }
    }
}

impl GlobalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.macro_size > 0.0 && self.micro_size > 0.0 && self.micro_size <= self.macro_size) {
            return Err(Error::Config("need 0 < micro_size <= macro_size".into()));
        }
        if !(self.time_factor > 0.0) {
            return Err(Error::Config("time_factor must be positive".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        if !(self.h_split > 0.0 && self.h_split < std::f64::consts::LN_2) {
            return Err(Error::Config("h_split must lie in (0, ln 2)".into()));
        }
        Ok(())
    }
}

/// Target region and local time budget handed to the tactical layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalDirective {
    pub node: usize,
    pub center: [f64; 2],
    pub region: Rect,
    pub t_local: f64,
}

/// Deterministic record of one global planning call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPlanRecord {
    pub active_nodes: usize,
    pub micro_nodes: usize,
    pub splits: usize,
    pub d_budget: f64,
    pub route: Vec<usize>,
    pub route_reward: f64,
    pub fallback: bool,
    pub target: usize,
    pub t_local: f64,
}

/// `r_i = (μ_i + β σ_i) · λ_i · 1[v_i unvisited]` for every active node, in id order.
pub fn node_rewards(graph: &SpatialGraph, model: &GpModel<f64>, beta: f64) -> Vec<(usize, f64)> {
    graph
        .active()
        .map(|n| {
            if graph.is_visited(n.id) {
                (n.id, 0.0)
            } else {
                let (mu, var) = model.predict(n.center);
                (n.id, (mu + beta * var.sqrt()) * n.area_weight)
            }
        })
        .collect()
}

/// Stateful wrapper that owns the adaptive graph across calls.
#[derive(Debug, Clone)]
pub struct GlobalPlanner {
    pub cfg: GlobalConfig,
    pub graph: SpatialGraph,
    seed: u64,
    calls: u64,
}

impl GlobalPlanner {
    pub fn new(grid: crate::world::GridSpec, cfg: GlobalConfig, seed: u64) -> Self {
        Self { graph: SpatialGraph::new(grid, cfg.macro_size, cfg.micro_size), cfg, seed, calls: 0 }
    }

    /// Split → aggregate → GP → rewards → orienteering; returns the first route node.
    pub fn plan<T: Scalar>(
        &mut self,
        state: &RobotState<f64>,
        belief: &BeliefState<T>,
        t_rem: f64,
    ) -> Result<(GlobalDirective, GlobalPlanRecord)> {
        if !(t_rem > 0.0) {
            return Err(Error::Validation(format!("global planning with no remaining time ({t_rem})")));
        }
        self.calls += 1;
        let splits = self.graph.maybe_split(belief, self.cfg.h_split);
        self.graph.aggregate(belief);

        let data: Vec<GpDatum<f64>> =
            self.graph.micro_nodes().map(|n| GpDatum { p: n.center, rho: n.rho_bar, nu2: n.nu2_bar }).collect();
        let model = gp_fit(&data, self.cfg.gp)?;
        let rewards = node_rewards(&self.graph, &model, self.cfg.beta);

        let candidates: Vec<(usize, f64)> = rewards.into_iter().filter(|&(_, r)| r > 0.0).collect();
        let positions: Vec<[f64; 2]> = candidates.iter().map(|&(id, _)| self.graph.nodes[id].center).collect();
        let values: Vec<f64> = candidates.iter().map(|&(_, r)| r).collect();
        let d_budget = t_rem / self.cfg.time_factor;
        let inst = OpInstance { positions: &positions, rewards: &values, start: state.p, budget: d_budget };
        let route = solve_op(&inst, &self.cfg.ils, self.seed.wrapping_mul(0x9e37_79b9).wrapping_add(self.calls));
        let route_ids: Vec<usize> = route.order.iter().map(|&k| candidates[k].0).collect();

        let (target, fallback) = match route_ids.first() {
            Some(&id) => (id, false),
            None => (self.fallback_target(state.p), true),
        };
        let node = &self.graph.nodes[target];
        let dist = (node.center[0] - state.p[0]).hypot(node.center[1] - state.p[1]);
        let t_local = (self.cfg.time_factor * dist).max(MIN_T_LOCAL).min(t_rem);
        let directive = GlobalDirective { node: target, center: node.center, region: node.region, t_local };
        let record = GlobalPlanRecord {
            active_nodes: self.graph.active().count(),
            micro_nodes: self.graph.micro_nodes().count(),
            splits,
            d_budget,
            route: route_ids,
            route_reward: route.reward,
            fallback,
            target,
            t_local,
        };
        Ok((directive, record))
    }

    /// Nearest unvisited active node, else the nearest macro (or any) active node.
    fn fallback_target(&self, p: [f64; 2]) -> usize {
        let d = |n: &GraphNode| (n.center[0] - p[0]).hypot(n.center[1] - p[1]);
        let nearest = |it: &mut dyn Iterator<Item = &GraphNode>| it.min_by(|a, b| d(a).total_cmp(&d(b))).map(|n| n.id);
        nearest(&mut self.graph.active().filter(|n| !self.graph.is_visited(n.id)))
            .or_else(|| nearest(&mut self.graph.macro_nodes()))
            .or_else(|| nearest(&mut self.graph.active()))
            .expect("graph always has active nodes")
    }

    pub fn mark_reached(&mut self, node: usize) {
        self.graph.mark_visited(node);
    }
}

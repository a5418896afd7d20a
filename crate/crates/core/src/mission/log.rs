use serde::{Deserialize, Serialize};

use super::config::PlannerKind;
use crate::global_planner::GlobalPlanRecord;
use crate::local_planner::{CostBreakdown, SeedKind};

/// Robot state and running totals after a simulation step (index 0 is the start pose).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub samples: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalTrigger {
    Start,
    Reached,
    Stall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalCycleRecord {
    pub horizon: usize,
    pub executed: usize,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    pub seed: SeedKind,
    pub active_cells: usize,
    pub candidates: usize,
    pub cost: CostBreakdown<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MissionEvent {
    Global { t: f64, trigger: GlobalTrigger, record: GlobalPlanRecord },
    Local { t: f64, record: LocalCycleRecord },
    Mcts { t: f64, action: usize, simulations: usize, root_value: f64, random_fallback: bool },
    Coverage { t: f64, waypoints: usize, spacing: f64 },
    CoverageDone { t: f64 },
}

impl MissionEvent {
    pub fn t(&self) -> f64 {
        match *self {
            MissionEvent::Global { t, .. }
            | MissionEvent::Local { t, .. }
            | MissionEvent::Mcts { t, .. }
            | MissionEvent::Coverage { t, .. }
            | MissionEvent::CoverageDone { t } => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    pub run_id: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub map: String,
    pub difficulty: Option<String>,
    pub total_targets: usize,
    pub sampled: usize,
    /// `sampled / total_targets`; `None` when the map holds no coral.
    pub ratio: Option<f64>,
    pub final_t: f64,
    pub steps: usize,
    pub distance: f64,
    pub global_calls: usize,
    pub local_cycles: usize,
}

/// Everything a mission produces that is a function of `(config, seed)` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionLog {
    pub steps: Vec<StepRecord>,
    pub events: Vec<MissionEvent>,
    pub summary: MissionSummary,
}

impl MissionLog {
    /// Confirmation ratio after each step, `None` entries when there are no targets.
    pub fn ratio_series(&self) -> Vec<(f64, Option<f64>)> {
        let n = self.summary.total_targets;
        self.steps.iter().map(|s| (s.t, (n > 0).then(|| s.samples as f64 / n as f64))).collect()
    }

    pub fn global_records(&self) -> impl Iterator<Item = (f64, GlobalTrigger, &GlobalPlanRecord)> {
        self.events.iter().filter_map(|e| match e {
            MissionEvent::Global { t, trigger, record } => Some((*t, *trigger, record)),
            _ => None,
        })
    }

    pub fn local_records(&self) -> impl Iterator<Item = (f64, &LocalCycleRecord)> {
        self.events.iter().filter_map(|e| match e {
            MissionEvent::Local { t, record } => Some((*t, record)),
            _ => None,
        })
    }
}

/// Wall-clock measurements. Kept apart from [`MissionLog`] so the log stays reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingLog {
    pub run_id: String,
    pub planner: Option<PlannerKind>,
    /// Seconds per local trajectory optimization.
    pub local_solve_s: Vec<f64>,
    /// Seconds per global planning call.
    pub global_solve_s: Vec<f64>,
    /// Seconds per MCTS decision.
    pub mcts_solve_s: Vec<f64>,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionOutput {
    pub log: MissionLog,
    pub timings: TimingLog,
}

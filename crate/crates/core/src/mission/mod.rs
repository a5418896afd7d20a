//! Closed-loop orchestration: sensing, belief updates, planner triggers and the time budget.

mod config;
mod export;
mod log;
mod sweep;

pub use config::{BeliefParams, BoustrophedonConfig, MapSource, MissionConfig, MissionParams, PlannerKind};
pub use export::{
    export_results, export_run, export_timings, read_series, read_summary, read_timings, series_rows, timing_rows,
    ExportFormat, SeriesRow, TimingRow, SUMMARY_FILE,
};
pub use log::{
    GlobalTrigger, LocalCycleRecord, MissionEvent, MissionLog, MissionOutput, MissionSummary, StepRecord, TimingLog,
};
pub use sweep::{
    aggregate, report_dir, run_sweep, run_sweep_configs, AggregateRow, HistogramBin, RunFailure, RunRecord, SweepOutcome, SweepReport,
    SweepSpec, TimeBin, TimingStats, ALL_TIERS,
};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{lawnmower_plan, mcts_plan, BoustrophedonTracker};
use crate::belief::BeliefState;
use crate::error::Result;
use crate::global_planner::{GlobalDirective, GlobalPlanner};
use crate::local_planner::{kinematics_step, optimize_trajectory, Control, LocalGoal};
use crate::sensors::{sample_dlc, sample_scout, RobotState};
use crate::world::GroundTruth;

/// Stall guard: a directive is abandoned after this many multiples of its `t_local`.
pub const STALL_FACTOR: f64 = 3.0;

/// True iff the robot position lies inside the directive's half-open region.
pub fn has_reached(state: &RobotState<f64>, directive: &GlobalDirective) -> bool {
    directive.region.contains(state.p)
}

/// Loads or generates the map named by the config and runs the mission on it.
pub fn run_mission(config: &MissionConfig) -> Result<MissionOutput> {
    config.validate()?;
    let gt = config.map.load()?;
    run_mission_on(config, &gt)
}

/// Runs one mission on an already loaded ground truth.
pub fn run_mission_on(config: &MissionConfig, gt: &GroundTruth) -> Result<MissionOutput> {
    config.validate()?;
    gt.validate()?;
    let started = Instant::now();
    let run_id = format!("{}_{}_s{}", config.map.label(), config.planner, config.seed);
    let mut sim = Sim::new(config, gt);
    let mut timings = TimingLog { run_id: run_id.clone(), planner: Some(config.planner), ..TimingLog::default() };

    match config.planner {
        PlannerKind::Himos => run_himos(config, &mut sim, &mut timings)?,
        PlannerKind::Boustrophedon => run_boustrophedon(config, &mut sim)?,
        PlannerKind::Mcts => run_mcts(config, &mut sim, &mut timings)?,
    }

    timings.wall_s = started.elapsed().as_secs_f64();
    let total = gt.coral_count();
    let last = *sim.steps.last().expect("start pose is always recorded");
    let summary = MissionSummary {
        run_id,
        planner: config.planner,
        seed: config.seed,
        map: config.map.label(),
        difficulty: gt.difficulty.map(|d| d.to_string()),
        total_targets: total,
        sampled: last.samples,
        ratio: (total > 0).then(|| last.samples as f64 / total as f64),
        final_t: last.t,
        steps: sim.step,
        distance: last.distance,
        global_calls: sim.global_calls,
        local_cycles: sim.local_cycles,
    };
    Ok(MissionOutput { log: MissionLog { steps: sim.steps, events: sim.events, summary }, timings })
}

/// Mutable mission state shared by all planners.
struct Sim<'a> {
    gt: &'a GroundTruth,
    cfg: &'a MissionConfig,
    belief: BeliefState<f64>,
    state: RobotState<f64>,
    sense_rng: ChaCha8Rng,
    planner_rng: ChaCha8Rng,
    step: usize,
    max_steps: usize,
    samples: usize,
    distance: f64,
    steps: Vec<StepRecord>,
    events: Vec<MissionEvent>,
    global_calls: usize,
    local_cycles: usize,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a MissionConfig, gt: &'a GroundTruth) -> Self {
        let mut start_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let g = gt.spec;
        let state = RobotState::new(
            start_rng.random_range(0.0..g.width_m),
            start_rng.random_range(0.0..g.height_m),
            start_rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let mut sense_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        sense_rng.set_stream(1);
        let mut planner_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        planner_rng.set_stream(2);
        let mut sim = Self {
            gt,
            cfg,
            belief: BeliefState::new(g, cfg.belief.ell_min, cfg.belief.ell_max),
            state,
            sense_rng,
            planner_rng,
            step: 0,
            max_steps: cfg.max_steps(),
            samples: 0,
            distance: 0.0,
            steps: Vec::with_capacity(cfg.max_steps() + 1),
            events: Vec::new(),
            global_calls: 0,
            local_cycles: 0,
        };
        sim.sense().expect("sensor readings come from the mission's own grid");
        sim.record();
        sim
    }

    fn t(&self) -> f64 {
        self.step as f64 * self.cfg.mission.dt
    }

    fn steps_left(&self) -> usize {
        self.max_steps - self.step
    }

    fn t_remaining(&self) -> f64 {
        self.steps_left() as f64 * self.cfg.mission.dt
    }

    fn sense(&mut self) -> Result<()> {
        let s = &self.cfg.sensors;
        for obs in sample_scout(self.gt, &self.state, &s.fls, &mut self.sense_rng) {
            self.belief.update_scout(&obs, &s.fls)?;
        }
        for obs in sample_scout(self.gt, &self.state, &s.flc, &mut self.sense_rng) {
            self.belief.update_scout(&obs, &s.flc)?;
        }
        for obs in sample_dlc(self.gt, &self.state, &s.dlc) {
            self.samples += self.belief.update_dlc(&obs)?;
        }
        Ok(())
    }

    fn record(&mut self) {
        self.steps.push(StepRecord {
            t: self.t(),
            x: self.state.p[0],
            y: self.state.p[1],
            theta: self.state.theta,
            samples: self.samples,
            distance: self.distance,
        });
    }

    /// Applies one control for `dt`, keeps the robot on the map, senses and logs.
    fn advance(&mut self, u: &Control<f64>) -> Result<()> {
        debug_assert!(self.step < self.max_steps);
        let u = u.clamped(self.cfg.robot.v_max, self.cfg.robot.omega_max);
        let mut next = kinematics_step(&self.state, &u, self.cfg.mission.dt);
        let g = self.gt.spec;
        next.p[0] = next.p[0].clamp(0.0, g.width_m - 1e-9);
        next.p[1] = next.p[1].clamp(0.0, g.height_m - 1e-9);
        self.distance += self.state.distance_to(next.p);
        self.state = next;
        self.step += 1;
        self.sense()?;
        self.record();
        Ok(())
    }
}

fn run_himos(cfg: &MissionConfig, sim: &mut Sim, timings: &mut TimingLog) -> Result<()> {
    let dt = cfg.mission.dt;
    let mut global = GlobalPlanner::new(sim.gt.spec, cfg.global, cfg.seed);
    let mut directive: Option<(GlobalDirective, f64)> = None;
    let mut previous: Vec<Control<f64>> = Vec::new();

    while sim.steps_left() > 0 {
        let trigger = match &directive {
            None => Some(GlobalTrigger::Start),
            Some((d, _)) if has_reached(&sim.state, d) => {
                global.mark_reached(d.node);
                Some(GlobalTrigger::Reached)
            }
            Some((d, issued)) if sim.t() - issued >= STALL_FACTOR * d.t_local => {
                global.mark_reached(d.node);
                Some(GlobalTrigger::Stall)
            }
            _ => None,
        };
        if let Some(trigger) = trigger {
            let clock = Instant::now();
            let (d, record) = global.plan(&sim.state, &sim.belief, sim.t_remaining())?;
            timings.global_solve_s.push(clock.elapsed().as_secs_f64());
            sim.global_calls += 1;
            sim.events.push(MissionEvent::Global { t: sim.t(), trigger, record });
            directive = Some((d, sim.t()));
            previous.clear();
        }
        let (d, issued) = directive.expect("directive set above");

        let elapsed = sim.t() - issued;
        let t_local = (d.t_local - elapsed).max(dt).min(sim.t_remaining());
        let goal = LocalGoal { target: d.center, t_local };
        let candidates = sim.belief.extract_candidates(cfg.local.delta);
        let clock = Instant::now();
        let prev = (!previous.is_empty()).then_some(previous.as_slice());
        let plan = optimize_trajectory(
            &sim.state,
            &sim.belief,
            &candidates,
            &goal,
            &cfg.robot,
            dt,
            &cfg.sensors,
            &cfg.local,
            prev,
        )?;
        timings.local_solve_s.push(clock.elapsed().as_secs_f64());
        sim.local_cycles += 1;

        let budget = cfg.n_exec().min(plan.horizon()).min(sim.steps_left());
        let mut executed = 0;
        for u in plan.controls.iter().take(budget) {
            sim.advance(u)?;
            executed += 1;
            if has_reached(&sim.state, &d) {
                break;
            }
        }
        previous = plan.controls[executed..].to_vec();
        sim.events.push(MissionEvent::Local {
            t: sim.t(),
            record: LocalCycleRecord {
                horizon: plan.horizon(),
                executed,
                iterations: plan.iterations,
                converged: plan.converged,
                diverged: plan.diverged,
                seed: plan.seed,
                active_cells: plan.active_cells,
                candidates: plan.candidates,
                cost: plan.cost,
            },
        });
    }
    Ok(())
}

fn run_boustrophedon(cfg: &MissionConfig, sim: &mut Sim) -> Result<()> {
    let plan = lawnmower_plan(&sim.gt.spec, cfg.spacing(), sim.state.p)?;
    sim.events.push(MissionEvent::Coverage { t: sim.t(), waypoints: plan.waypoints.len(), spacing: plan.spacing });
    let mut tracker = BoustrophedonTracker::new(plan);
    while sim.steps_left() > 0 {
        let (u, done) = tracker.next_control(&sim.state, &cfg.robot, cfg.mission.dt);
        if done {
            // pattern finished: hold station for the rest of the budget
            sim.events.push(MissionEvent::CoverageDone { t: sim.t() });
            while sim.steps_left() > 0 {
                sim.advance(&Control::zero())?;
            }
            break;
        }
        sim.advance(&u)?;
    }
    Ok(())
}

fn run_mcts(cfg: &MissionConfig, sim: &mut Sim, timings: &mut TimingLog) -> Result<()> {
    let mut mcts = cfg.mcts;
    mcts.v = cfg.robot.v_max.min(mcts.v);
    mcts.omega = cfg.robot.omega_max.min(mcts.omega);
    while sim.steps_left() > 0 {
        let clock = Instant::now();
        let decision = mcts_plan(&sim.state, &sim.belief, &cfg.sensors, &mcts, cfg.mission.dt, &mut sim.planner_rng)?;
        timings.mcts_solve_s.push(clock.elapsed().as_secs_f64());
        sim.events.push(MissionEvent::Mcts {
            t: sim.t(),
            action: decision.action,
            simulations: decision.simulations,
            root_value: decision.root_value,
            random_fallback: decision.random_fallback,
        });
        sim.advance(&decision.control)?;
    }
    Ok(())
}

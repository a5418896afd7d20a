//! Receding-horizon trajectory optimization: single shooting over the controls with a
//! spectral projected gradient method on the control box.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::active_map::build_active_map;
use super::cost::{flatten, unflatten, CostBreakdown, CostContext, CostWeights};
use super::kinematics::{kinematics_step, Control, RobotLimits};
use super::proxy::{DlcField, ProxySensorParams, ScoutField, SensorSuite};
use crate::belief::{BeliefState, CandidateMap};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, wrap_angle, Scalar};
use crate::sensors::RobotState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct LocalConfig<T> {
    /// Horizon cap in steps.
    pub h_max: usize,
    /// Steps executed before replanning.
    pub n_exec: usize,
    /// Candidate threshold on `σ(ℓ^C)`.
    pub delta: T,
    /// Active map pooling factor.
    pub pooling: usize,
    pub weights: CostWeights<T>,
    pub proxy: ProxySensorParams<T>,
    /// Seed speed as a fraction of `v_max`.
    pub seed_speed: T,
    pub max_iterations: usize,
    /// Projected-gradient infinity norm at which the solve counts as converged.
    pub tolerance: T,
    /// Number of best-scoring seeds that are optimized.
    pub n_starts: usize,
    /// Optional wall-clock cap per solve (s). Off by default so plans are reproducible.
    pub time_cap: Option<f64>,
}

impl<T: Scalar> Default for LocalConfig<T> {
    fn default() -> Self {
        Self {
            h_max: 40,
            n_exec: 4,
            delta: lit(0.8),
            pooling: 4,
            weights: CostWeights::default(),
            proxy: ProxySensorParams::default(),
            seed_speed: lit(0.8),
            max_iterations: 25,
            tolerance: lit(1e-5),
            n_starts: 1,
            time_cap: None,
        }
    }
}

impl<T: Scalar> LocalConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let half = lit::<T>(0.5);
        if self.h_max == 0 || self.n_exec == 0 || self.pooling == 0 || self.max_iterations == 0 || self.n_starts == 0 {
            return Err(Error::Config("local planner counts (h_max, n_exec, pooling, max_iterations, n_starts) must be ≥ 1".into()));
        }
        if !(self.delta > half && self.delta < T::one()) {
            return Err(Error::Config(format!("candidate threshold {} must lie in (0.5, 1)", self.delta)));
        }
        if !self.weights.is_valid() || !self.proxy.is_valid() {
            return Err(Error::Config("local planner weights must be ≥ 0 and proxy parameters > 0".into()));
        }
        if !(self.seed_speed > T::zero() && self.seed_speed <= T::one()) {
            return Err(Error::Config("seed_speed must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Waypoint and time budget handed down by the global layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalGoal<T> {
    pub target: [T; 2],
    pub t_local: T,
}

/// Which warm start produced the returned plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    Straight,
    Detour,
    Shifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan<T> {
    pub controls: Vec<Control<T>>,
    /// `x_0..x_H`, headings wrapped.
    pub states: Vec<RobotState<T>>,
    pub cost: CostBreakdown<T>,
    pub converged: bool,
    /// Non-finite cost met during the solve; the best finite iterate is returned.
    pub diverged: bool,
    pub iterations: usize,
    pub seed: SeedKind,
    pub active_cells: usize,
    pub candidates: usize,
}

impl<T: Scalar> TrajectoryPlan<T> {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }
}

/// `H = ⌊T_local/Δt⌋` clamped to `[1, h_max]`.
pub fn horizon_steps<T: Scalar>(t_local: T, dt: T, h_max: usize) -> usize {
    let h = (to_f64(t_local) / to_f64(dt) + 1e-9).floor();
    if h.is_finite() && h >= 1.0 {
        (h as usize).min(h_max)
    } else {
        1
    }
}

/// Follows `waypoints` in order at `speed`, turning the heading toward the travel direction.
pub fn track_waypoints<T: Scalar>(
    x0: &RobotState<T>,
    waypoints: &[[T; 2]],
    h: usize,
    speed: T,
    limits: &RobotLimits<T>,
    dt: T,
) -> Vec<Control<T>> {
    let mut out = Vec::with_capacity(h);
    let mut x = *x0;
    let mut wp = 0;
    let tiny = lit::<T>(1e-9);
    for _ in 0..h {
        while wp + 1 < waypoints.len() && x.distance_to(waypoints[wp]) <= speed * dt {
            wp += 1;
        }
        let u = match waypoints.get(wp) {
            Some(&q) => {
                let (dx, dy) = (q[0] - x.p[0], q[1] - x.p[1]);
                let dist = dx.hypot(dy);
                if dist <= tiny {
                    Control::zero()
                } else {
                    let v = speed.min(dist / dt);
                    let (wx, wy) = (v * dx / dist, v * dy / dist);
                    let (s, c) = x.theta.sin_cos();
                    let omega = wrap_angle(dy.atan2(dx) - x.theta) / dt;
                    Control::new(c * wx + s * wy, -s * wx + c * wy, omega).clamped(limits.v_max, limits.omega_max)
                }
            }
            None => Control::zero(),
        };
        x = kinematics_step(&x, &u, dt);
        out.push(u);
    }
    out
}

/// Nearest-neighbour chain through candidates, cut where its length exceeds `max_len`.
fn candidate_chain<T: Scalar>(start: [T; 2], candidates: &[[T; 2]], max_len: T) -> Vec<[T; 2]> {
    let mut left: Vec<[T; 2]> = candidates.to_vec();
    let mut chain = Vec::new();
    let mut at = start;
    let mut len = T::zero();
    while !left.is_empty() {
        let (k, d) = left
            .iter()
            .enumerate()
            .map(|(k, q)| (k, (q[0] - at[0]).hypot(q[1] - at[1])))
            .fold((0, T::infinity()), |best, cur| if cur.1 < best.1 { cur } else { best });
        if len + d > max_len {
            break;
        }
        len = len + d;
        at = left.swap_remove(k);
        chain.push(at);
    }
    chain
}

struct SpgResult<T> {
    u: Vec<T>,
    cost: CostBreakdown<T>,
    iterations: usize,
    converged: bool,
    diverged: bool,
}

fn project<T: Scalar>(u: &mut [T], limits: &RobotLimits<T>) {
    for (i, v) in u.iter_mut().enumerate() {
        let m = if i % 3 == 2 { limits.omega_max } else { limits.v_max };
        *v = v.max(-m).min(m);
    }
}

fn inf_norm_projected_step<T: Scalar>(u: &[T], g: &[T], limits: &RobotLimits<T>) -> T {
    let mut trial: Vec<T> = u.iter().zip(g).map(|(a, b)| *a - *b).collect();
    project(&mut trial, limits);
    trial.iter().zip(u).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
}

/// Spectral projected gradient with a nonmonotone Armijo search over the last 10 values.
fn spg<T: Scalar>(
    ctx: &CostContext<T>,
    u0: &[T],
    limits: &RobotLimits<T>,
    cfg: &LocalConfig<T>,
    started: Instant,
) -> SpgResult<T> {
    const MEMORY: usize = 10;
    let n = u0.len();
    let mut u = u0.to_vec();
    project(&mut u, limits);
    let mut g = vec![T::zero(); n];
    let mut f = ctx.cost_grad(&u, &mut g);
    if !f.total.is_finite() {
        return SpgResult { u, cost: f, iterations: 0, converged: false, diverged: true };
    }
    let (a_min, a_max) = (lit::<T>(1e-6), lit::<T>(1e3));
    let pg0 = inf_norm_projected_step(&u, &g, limits);
    let mut alpha = if pg0 > T::zero() { (T::one() / pg0).max(a_min).min(a_max) } else { T::one() };
    let mut history: VecDeque<T> = VecDeque::from([f.total]);
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;
    let mut stagnant = 0;
    let mut g_new = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let sufficient = lit::<T>(1e-4);
    while iterations < cfg.max_iterations {
        if inf_norm_projected_step(&u, &g, limits) < cfg.tolerance {
            converged = true;
            break;
        }
        if cfg.time_cap.is_some_and(|cap| started.elapsed().as_secs_f64() >= cap) {
            break;
        }
        iterations += 1;
        let mut d: Vec<T> = u.iter().zip(&g).map(|(a, b)| *a - alpha * *b).collect();
        project(&mut d, limits);
        d.iter_mut().zip(&u).for_each(|(di, ui)| *di = *di - *ui);
        let gtd: T = g.iter().zip(&d).map(|(a, b)| *a * *b).sum();
        if gtd >= T::zero() {
            converged = true;
            break;
        }
        let f_ref = history.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
        let mut t = T::one();
        let mut accepted: Option<CostBreakdown<T>> = None;
        let mut have_grad = false;
        for attempt in 0..40 {
            trial.iter_mut().zip(u.iter().zip(&d)).for_each(|(x, (a, b))| *x = *a + t * *b);
            let ft = if attempt == 0 { ctx.cost_grad(&trial, &mut g_new) } else { ctx.cost(&trial) };
            if !ft.total.is_finite() {
                diverged = true;
            } else if ft.total <= f_ref + sufficient * t * gtd {
                have_grad = attempt == 0;
                accepted = Some(ft);
                break;
            }
            t = t * lit(0.5);
        }
        let Some(f_new) = accepted else { break };
        if !have_grad {
            ctx.cost_grad(&trial, &mut g_new);
        }
        let mut sts = T::zero();
        let mut sty = T::zero();
        for i in 0..n {
            let s = trial[i] - u[i];
            sts = sts + s * s;
            sty = sty + s * (g_new[i] - g[i]);
        }
        alpha = if sty > T::zero() { (sts / sty).max(a_min).min(a_max) } else { a_max };
        let rel = (f.total - f_new.total) / (T::one() + f.total.abs());
        stagnant = if rel < lit(1e-9) { stagnant + 1 } else { 0 };
        std::mem::swap(&mut u, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        history.push_back(f.total);
        if history.len() > MEMORY {
            history.pop_front();
        }
        if stagnant >= 3 {
            converged = true;
            break;
        }
    }
    SpgResult { u, cost: f, iterations, converged, diverged }
}

/// Builds the local cost for a snapshot: pooled active map and candidate centers, both culled
/// to what the horizon can reach.
#[allow(clippy::too_many_arguments)]
pub fn build_context<T: Scalar>(
    x0: &RobotState<T>,
    belief: &BeliefState<T>,
    candidates: &CandidateMap,
    goal: &LocalGoal<T>,
    h: usize,
    limits: &RobotLimits<T>,
    dt: T,
    sensors: &SensorSuite<T>,
    cfg: &LocalConfig<T>,
) -> Result<CostContext<T>> {
    let active = build_active_map(belief, cfg.pooling)?;
    let travel = lit::<T>(h as f64) * dt * limits.v_max * lit(std::f64::consts::SQRT_2);
    let fls = ScoutField::new(&sensors.fls, &cfg.proxy);
    let flc = ScoutField::new(&sensors.flc, &cfg.proxy);
    let reach = travel + fls.reach().max(flc.reach());
    let keep = active.within(x0.p, reach);
    let cells = keep.iter().map(|&i| active.centers[i]).collect();
    let l_s = keep.iter().map(|&i| active.lambda_fls0[i]).collect();
    let l_c = keep.iter().map(|&i| active.lambda_flc0[i]).collect();
    let dlc_reach = travel + DlcField::new(&sensors.dlc, &cfg.proxy).reach() * lit(std::f64::consts::SQRT_2);
    let cand: Vec<[T; 2]> = candidates
        .indices()
        .into_iter()
        .map(|i| {
            let c = belief.grid.center(i);
            [lit::<T>(c[0]), lit::<T>(c[1])]
        })
        .filter(|q| x0.distance_to(*q) <= dlc_reach)
        .collect();
    Ok(CostContext::new(*x0, dt, goal.target, cells, l_s, l_c, cand, *sensors, cfg.proxy, cfg.weights))
}

/// Optimizes a horizon of controls toward `goal` over the snapshot `belief`.
///
/// `previous` is the tail of the last plan; when given it is shifted in as an extra seed.
#[allow(clippy::too_many_arguments)]
pub fn optimize_trajectory<T: Scalar>(
    x0: &RobotState<T>,
    belief: &BeliefState<T>,
    candidates: &CandidateMap,
    goal: &LocalGoal<T>,
    limits: &RobotLimits<T>,
    dt: T,
    sensors: &SensorSuite<T>,
    cfg: &LocalConfig<T>,
    previous: Option<&[Control<T>]>,
) -> Result<TrajectoryPlan<T>> {
    let started = Instant::now();
    let h = horizon_steps(goal.t_local, dt, cfg.h_max);
    let ctx = build_context(x0, belief, candidates, goal, h, limits, dt, sensors, cfg)?;
    let speed = cfg.seed_speed * limits.v_max;

    let straight = track_waypoints(x0, &[goal.target], h, speed, limits, dt);
    let mut seeds = vec![(SeedKind::Straight, flatten(&straight))];
    if !ctx.candidates.is_empty() {
        let budget = lit::<T>(h as f64) * dt * speed * lit(0.75);
        let mut wps = candidate_chain(x0.p, &ctx.candidates, budget);
        if !wps.is_empty() {
            wps.push(goal.target);
            seeds.push((SeedKind::Detour, flatten(&track_waypoints(x0, &wps, h, speed, limits, dt))));
        }
    }
    if let Some(prev) = previous.filter(|p| !p.is_empty()) {
        let mut u: Vec<Control<T>> = prev.iter().take(h).copied().collect();
        if u.len() < h {
            let mut x = *x0;
            for c in &u {
                x = kinematics_step(&x, c, dt);
            }
            u.extend(track_waypoints(&x, &[goal.target], h - u.len(), speed, limits, dt));
        }
        seeds.push((SeedKind::Shifted, flatten(&u)));
    }

    let mut scored: Vec<(T, usize)> = seeds.iter().enumerate().map(|(k, s)| (ctx.cost(&s.1).total, k)).collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut best: Option<(SpgResult<T>, SeedKind)> = None;
    for &(j0, k) in scored.iter().take(cfg.n_starts) {
        if !j0.is_finite() {
            continue;
        }
        let res = spg(&ctx, &seeds[k].1, limits, cfg, started);
        let better = match &best {
            None => true,
            Some((b, _)) => res.cost.total < b.cost.total,
        };
        if better {
            best = Some((res, seeds[k].0));
        }
    }
    let (res, seed) = match best {
        Some(b) => b,
        None => {
            let u = seeds.swap_remove(0).1;
            let cost = ctx.cost(&u);
            (SpgResult { u, cost, iterations: 0, converged: false, diverged: true }, SeedKind::Straight)
        }
    };
    let controls = unflatten(&res.u);
    let mut states = Vec::with_capacity(h + 1);
    let mut x = *x0;
    states.push(x);
    for c in &controls {
        x = kinematics_step(&x, c, dt);
        states.push(x);
    }
    Ok(TrajectoryPlan {
        controls,
        states,
        cost: res.cost,
        converged: res.converged,
        diverged: res.diverged,
        iterations: res.iterations,
        seed,
        active_cells: ctx.cells.len(),
        candidates: ctx.candidates.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::GridSpec;

    fn converged_belief() -> BeliefState<f64> {
        let mut b = BeliefState::with_default_bounds(GridSpec::new(20.0, 20.0, 0.25).unwrap());
        b.ell_s.iter_mut().for_each(|v| *v = -10.0);
        b.ell_c.iter_mut().for_each(|v| *v = -10.0);
        b
    }

    #[test]
    fn horizon_rule() {
        assert_eq!(horizon_steps(60.0, 0.5, 40), 40);
        assert_eq!(horizon_steps(60.0, 0.5, 1000), 120);
        assert_eq!(horizon_steps(0.2, 0.5, 40), 1);
        assert_eq!(horizon_steps(3.0, 0.5, 40), 6);
    }

    #[test]
    fn straight_seed_reaches_and_stops() {
        let x0 = RobotState::new(0.0, 0.0, 0.0);
        let lim = RobotLimits::default();
        let u = track_waypoints(&x0, &[[2.0, 0.0]], 20, 0.4, &lim, 0.5);
        let mut x = x0;
        for c in &u {
            assert!(c.within(0.5, 1.0));
            x = kinematics_step(&x, c, 0.5);
        }
        assert!(x.distance_to([2.0, 0.0]) < 1e-9);
    }

    #[test]
    fn converged_map_goes_straight() {
        let b = converged_belief();
        let cand = b.extract_candidates(0.8);
        let x0 = RobotState::new(5.0, 10.0, 0.0);
        // 10 s at the 0.4 m/s seed speed falls 1 m short of the waypoint
        let goal = LocalGoal { target: [10.0, 10.0], t_local: 10.0 };
        let cfg = LocalConfig::default();
        let plan = optimize_trajectory(&x0, &b, &cand, &goal, &RobotLimits::default(), 0.5, &SensorSuite::default(), &cfg, None).unwrap();
        assert_eq!(plan.horizon(), 20);
        let seed = track_waypoints(&x0, &[goal.target], 20, 0.4, &RobotLimits::default(), 0.5);
        let mut xs = x0;
        for c in &seed {
            xs = kinematics_step(&xs, c, 0.5);
        }
        let end = plan.states.last().unwrap();
        assert!(end.distance_to(goal.target) < xs.distance_to(goal.target));
        assert!(end.distance_to(goal.target) < x0.distance_to(goal.target));
        assert!(plan.states.iter().all(|s| (s.p[1] - 10.0).abs() < 0.5));
        assert!(plan.controls.iter().all(|c| c.within(0.5, 1.0)));
    }

    #[test]
    fn detours_over_candidate() {
        let mut b = converged_belief();
        let q = b.grid.cell_at([8.0, 11.0]).unwrap();
        b.ell_c[q] = 5.0;
        let cand = b.extract_candidates(0.8);
        assert_eq!(cand.count(), 1);
        let x0 = RobotState::new(4.0, 10.0, 0.0);
        let goal = LocalGoal { target: [12.0, 10.0], t_local: 20.0 };
        let plan = optimize_trajectory(
            &x0,
            &b,
            &cand,
            &goal,
            &RobotLimits::default(),
            0.5,
            &SensorSuite::default(),
            &LocalConfig::default(),
            None,
        )
        .unwrap();
        let qc = b.grid.center(q);
        let hit = plan.states.iter().any(|s| {
            let d = s.to_body(qc);
            d[0].abs() <= 0.5 && d[1].abs() <= 0.5
        });
        assert!(hit, "{:?}", plan.states);
        for (k, c) in plan.controls.iter().enumerate() {
            assert!(c.within(0.5, 1.0));
            let next = kinematics_step(&plan.states[k], c, 0.5);
            assert!((next.p[0] - plan.states[k + 1].p[0]).abs() <= 1e-12);
            assert!(wrap_angle(next.theta - plan.states[k + 1].theta).abs() <= 1e-12);
        }
    }
}

//! Lawnmower coverage and its waypoint tracking controller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local_planner::{Control, RobotLimits};
use crate::scalar::wrap_angle;
use crate::sensors::RobotState;
use crate::world::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawnmowerPlan {
    pub waypoints: Vec<[f64; 2]>,
    /// Distance between neighbouring transects (m).
    pub spacing: f64,
}

/// Transects parallel to x, `spacing` apart and `spacing/2` in from the map edges, starting
/// at the map corner nearest to `start`.
pub fn lawnmower_plan(grid: &GridSpec, spacing: f64, start: [f64; 2]) -> Result<LawnmowerPlan> {
    if !(spacing > 0.0 && spacing <= grid.width_m.min(grid.height_m)) {
        return Err(Error::Config(format!("swath spacing {spacing} does not fit the map")));
    }
    let half = 0.5 * spacing;
    let (x_lo, x_hi) = (half, grid.width_m - half);
    let mut ys = Vec::new();
    let mut y = half;
    while y < grid.height_m {
        ys.push(y.min(grid.height_m - half));
        y += spacing;
    }
    if start[1] > 0.5 * grid.height_m {
        ys.reverse();
    }
    let mut left_to_right = start[0] <= 0.5 * grid.width_m;
    let mut waypoints = Vec::with_capacity(2 * ys.len());
    for y in ys {
        let (a, b) = if left_to_right { (x_lo, x_hi) } else { (x_hi, x_lo) };
        waypoints.push([a, y]);
        waypoints.push([b, y]);
        left_to_right = !left_to_right;
    }
    Ok(LawnmowerPlan { waypoints, spacing })
}

/// Distance at which a waypoint counts as reached (m).
pub const ARRIVAL_TOL: f64 = 0.05;

/// Heading error (rad) above which the tracker turns without advancing.
pub const ALIGN_TOL: f64 = 0.1;

/// Proportional heading control with saturated surge toward the current waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoustrophedonTracker {
    pub plan: LawnmowerPlan,
    /// Index of the waypoint being tracked; never decreases.
    pub index: usize,
}

impl BoustrophedonTracker {
    pub fn new(plan: LawnmowerPlan) -> Self {
        Self { plan, index: 0 }
    }

    pub fn is_done(&self) -> bool {
        self.index >= self.plan.waypoints.len()
    }

    /// Next control, or `(zero, true)` once the plan is exhausted.
    pub fn next_control(&mut self, state: &RobotState<f64>, limits: &RobotLimits<f64>, dt: f64) -> (Control<f64>, bool) {
        while let Some(&wp) = self.plan.waypoints.get(self.index) {
            if state.distance_to(wp) > ARRIVAL_TOL {
                break;
            }
            self.index += 1;
        }
        let Some(&wp) = self.plan.waypoints.get(self.index) else {
            return (Control::zero(), true);
        };
        let (dx, dy) = (wp[0] - state.p[0], wp[1] - state.p[1]);
        let err = wrap_angle(dy.atan2(dx) - state.theta);
        let omega = (err / dt).clamp(-limits.omega_max, limits.omega_max);
        let dist = dx.hypot(dy);
        if dist <= limits.v_max * dt {
            // final approach: land on the waypoint with a body-frame translation
            let (s, c) = state.theta.sin_cos();
            return (Control::new((c * dx + s * dy) / dt, (-s * dx + c * dy) / dt, omega), false);
        }
        // turn on the spot until roughly aligned so transects stay on their lines
        let surge = if err.abs() <= ALIGN_TOL { limits.v_max * err.cos() } else { 0.0 };
        (Control::new(surge, 0.0, omega), false)
    }
}

/// Convenience wrapper: control toward the tracker's current waypoint.
pub fn boustrophedon_next(
    state: &RobotState<f64>,
    tracker: &mut BoustrophedonTracker,
    limits: &RobotLimits<f64>,
    dt: f64,
) -> (Control<f64>, bool) {
    tracker.next_control(state, limits, dt)
}

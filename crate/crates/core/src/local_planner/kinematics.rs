use serde::{Deserialize, Serialize};

use crate::scalar::{wrap_angle, Scalar};
use crate::sensors::RobotState;

/// Body-frame surge/sway velocity (m/s) and yaw rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control<T> {
    pub vx: T,
    pub vy: T,
    pub omega: T,
}

impl<T: Scalar> Control<T> {
    pub fn new(vx: T, vy: T, omega: T) -> Self {
        Self { vx, vy, omega }
    }

    pub fn zero() -> Self {
        Self { vx: T::zero(), vy: T::zero(), omega: T::zero() }
    }

    pub fn clamped(self, v_max: T, omega_max: T) -> Self {
        Self {
            vx: self.vx.max(-v_max).min(v_max),
            vy: self.vy.max(-v_max).min(v_max),
            omega: self.omega.max(-omega_max).min(omega_max),
        }
    }

    pub fn within(&self, v_max: T, omega_max: T) -> bool {
        self.vx.abs() <= v_max && self.vy.abs() <= v_max && self.omega.abs() <= omega_max
    }
}

/// Actuation limits on each body-frame velocity component and on the yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct RobotLimits<T> {
    pub v_max: T,
    pub omega_max: T,
}

impl<T: Scalar> Default for RobotLimits<T> {
    fn default() -> Self {
        Self { v_max: crate::scalar::lit(0.5), omega_max: crate::scalar::lit(1.0) }
    }
}

/// Holonomic step without heading wrap; used inside the optimizer where headings enter only
/// through sin/cos.
#[inline]
pub fn step_unwrapped<T: Scalar>(x: &RobotState<T>, u: &Control<T>, dt: T) -> RobotState<T> {
    let (s, c) = x.theta.sin_cos();
    RobotState {
        p: [x.p[0] + (c * u.vx - s * u.vy) * dt, x.p[1] + (s * u.vx + c * u.vy) * dt],
        theta: x.theta + u.omega * dt,
    }
}

/// `p' = p + R(θ)[v_x, v_y]ᵀ dt`, `θ' = wrap(θ + ω dt)`.
pub fn kinematics_step<T: Scalar>(x: &RobotState<T>, u: &Control<T>, dt: T) -> RobotState<T> {
    let mut next = step_unwrapped(x, u, dt);
    next.theta = wrap_angle(next.theta);
    next
}

//! Time-triggered tactical planner driven by differentiable belief dynamics.

mod active_map;
mod cost;
mod kinematics;
mod optimizer;
mod proxy;

pub use active_map::{build_active_map, ActiveMap};
pub use cost::{cost, flatten, unflatten, CostBreakdown, CostContext, CostWeights};
pub use kinematics::{kinematics_step, step_unwrapped, Control, RobotLimits};
pub use optimizer::{
    build_context, horizon_steps, optimize_trajectory, track_waypoints, LocalConfig, LocalGoal, SeedKind,
    TrajectoryPlan,
};
pub use proxy::{
    evidence_magnitude, evidence_magnitude_with_grad, h_proxy, h_proxy_prime, p_samp, p_samp_prime, rollout_proxy,
    soft_footprint, soft_fov, soft_fov_dlc_with_grad, soft_fov_scout_with_grad, DlcField, FieldModel,
    ProxyBeliefState, ProxySensorParams, ScoutField, SensorSuite, FIELD_CUTOFF, FIELD_FADE,
};

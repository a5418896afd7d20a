//! Closed-loop search-and-sample mission simulator for a fixed-altitude underwater robot.
//!
//! Numeric modules are generic over the scalar type; the aliases below fix `f64`.

pub mod baselines;
pub mod belief;
pub mod error;
pub mod global_planner;
pub mod local_planner;
pub mod mission;
pub mod scalar;
pub mod sensors;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Belief = belief::BeliefState<f64>;
pub type State = sensors::RobotState<f64>;
pub type ScoutSpec = sensors::ScoutSensorSpec<f64>;
pub type Dlc = sensors::DlcSpec<f64>;
pub type Sensors = local_planner::SensorSuite<f64>;
pub type ControlInput = local_planner::Control<f64>;
pub type Limits = local_planner::RobotLimits<f64>;
pub type Plan = local_planner::TrajectoryPlan<f64>;
pub type LocalCfg = local_planner::LocalConfig<f64>;
pub type Gp = global_planner::GpModel<f64>;

pub use mission::{run_mission, MissionConfig, MissionLog, PlannerKind};

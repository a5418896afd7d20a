//! Reference planners sharing the sensing and belief stack.

mod boustrophedon;
mod mcts;

pub use boustrophedon::{boustrophedon_next, lawnmower_plan, BoustrophedonTracker, LawnmowerPlan, ARRIVAL_TOL};
pub use mcts::{mcts_plan, MctsConfig, MctsDecision};

//! Sub-task decoupled planning for long-horizon agent tasks.
//!
//! A supervisor decomposes a task into a dependency graph of sub-goals,
//! dispatches ready nodes with node-scoped context to a planner and executor,
//! repairs deviations by replanning only the active node, and revises the
//! graph between rounds.

pub mod graph;
pub mod roles;
pub mod environments;
pub mod telemetry;
pub mod engine;
pub mod baselines;
pub mod cli;

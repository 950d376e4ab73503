//! Cooperative multi-UAV integrated sensing and communication planner.
//!
//! Jointly optimizes UAV trajectories, per-BS communication and sensing
//! power, and the per-slot sensing/communication time split to maximize the
//! mission sum rate under a cumulative radar mutual-information requirement.
//! The non-convex problem is handled by alternating optimization over four
//! blocks, each solved by successive convex approximation.

pub mod comm;
pub mod error;
pub mod geometry;
pub mod orchestrator;
pub mod report;
pub mod scenario;
pub mod sensing;
pub mod solver;
pub mod state;
pub mod subproblems;

pub use error::{PlannerError, Result};
pub use scenario::{dbm_to_watts, load_scenario, save_scenario, validate_scenario, Scenario};

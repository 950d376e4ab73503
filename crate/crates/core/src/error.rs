use std::path::PathBuf;

use thiserror::Error;

use crate::scenario::ValidationReport;

/// Errors produced by the planner.
#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error("invalid scenario: {0}")]
    Validation(ValidationReport),

    #[error("degenerate geometry: slant distance squared {distance_sq:.3e} m^2 is below 1 m^2")]
    DegenerateGeometry { distance_sq: f64 },

    #[error(
        "degenerate collision anchor: UAVs {i} and {j} coincide in slot {slot} at equal altitude"
    )]
    DegenerateAnchor { i: usize, j: usize, slot: usize },

    #[error("starting point is not strictly feasible (max violation {violation:.3e})")]
    InfeasibleStart { violation: f64 },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("convex subproblem is infeasible: {0}")]
    InfeasibleSubproblem(String),

    #[error("sensing requirement cannot be met in {block} block: {detail}")]
    InfeasibleSensing { block: String, detail: String },

    #[error("straight-line initialization violates the separation constraint between UAVs {i} and {j} in slot {slot}")]
    InfeasibleScenario { i: usize, j: usize, slot: usize },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PlannerError {
    /// True for outcomes that mean "no feasible plan" rather than bad input.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            PlannerError::InfeasibleSensing { .. }
                | PlannerError::InfeasibleScenario { .. }
                | PlannerError::InfeasibleSubproblem(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PlannerError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, PlannerError>;

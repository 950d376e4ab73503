//! The four block updates of the alternating optimization: communication
//! power, sensing power, time split and trajectory.

mod comm_power;
mod sensing_power;
mod time_division;
mod trajectory;

pub use comm_power::{comm_power_step, interference_log, CommSurrogate};
pub use sensing_power::{
    sensing_interference_log, sensing_power_rounds, sensing_power_step, slot_sensing_power,
    SensingSurrogate,
};
pub use time_division::{time_division_step, MiCurve, TimeDivisionInput};
pub use trajectory::{
    collision_linearization, inv_z_tangent, mi_gradient, q_step, rate_with_fixed_ranges, trajectory_step,
    z_step, CollisionRow, EpigraphState, GainModel, MiRow, QStepInput, RateSurrogate, TrajectoryTrace,
    TrustRegionState,
};

use crate::comm::{all_slot_gains, slot_utilities, weighted_sum, CommBeamformers};
use crate::error::Result;
use crate::geometry::KronVector;
use crate::scenario::Scenario;
use crate::sensing::{
    build_combiners, cumulative_mi, mi_slopes, scenario_codebook, sensing_tables, BeamCodebook,
};
use crate::solver::{SolveReport, SolveStatus};
use crate::state::{CommPower, SensingPower, Trajectory};

/// Scenario plus the fixed sensing beams derived from it.
#[derive(Debug, Clone)]
pub struct ModelContext {
    pub scenario: Scenario,
    pub codebook: BeamCodebook,
    /// Receive combiners `[m][b]`.
    pub combiners: Vec<Vec<KronVector>>,
}

impl ModelContext {
    pub fn new(scenario: Scenario) -> Self {
        let codebook = scenario_codebook(&scenario);
        let combiners = build_combiners(&scenario, &codebook);
        Self {
            scenario,
            codebook,
            combiners,
        }
    }

    /// Mission objective `Σ_n (1 − δ[n]) Σ_k log2(1 + γ_k[n])`.
    pub fn objective(
        &self,
        traj: &Trajectory,
        pc: &CommPower,
        beams: &CommBeamformers,
        delta: &[f64],
    ) -> Result<f64> {
        let gains = all_slot_gains(&self.scenario, traj, beams)?;
        Ok(weighted_sum(
            &slot_utilities(&self.scenario, &gains, pc),
            delta,
        ))
    }

    /// Per-slot MI slopes `c[n]`.
    pub fn mi_slopes(&self, traj: &Trajectory, ps: &SensingPower) -> Result<Vec<f64>> {
        let tables = sensing_tables(&self.scenario, traj, &self.codebook, &self.combiners)?;
        Ok(mi_slopes(&self.scenario, &tables, ps))
    }

    pub fn cumulative_mi(
        &self,
        traj: &Trajectory,
        ps: &SensingPower,
        delta: &[f64],
    ) -> Result<f64> {
        Ok(cumulative_mi(&self.mi_slopes(traj, ps)?, delta))
    }
}

/// Merges per-slot reports into one block report.
pub(crate) fn merge_reports(reports: Vec<SolveReport>) -> SolveReport {
    let mut out = SolveReport {
        status: SolveStatus::Optimal,
        x: Vec::new(),
        objective: 0.0,
        kkt_residual: 0.0,
        iterations: 0,
    };
    for r in reports {
        if r.status != SolveStatus::Optimal && out.status == SolveStatus::Optimal {
            out.status = r.status;
        }
        out.x.extend(r.x);
        out.objective += r.objective;
        out.kkt_residual = out.kkt_residual.max(r.kkt_residual);
        out.iterations += r.iterations;
    }
    out
}

/// Report for a block that kept its input.
pub(crate) fn unchanged_report(objective: f64) -> SolveReport {
    SolveReport {
        status: SolveStatus::Optimal,
        x: Vec::new(),
        objective,
        kkt_residual: 0.0,
        iterations: 0,
    }
}

/// Pulls `x` slightly toward `center` so that inequality rows tight at `x`
/// become strict.
pub(crate) fn nudge_inward(x: &mut [f64], center: &[f64], weight: f64) {
    for (xi, ci) in x.iter_mut().zip(center) {
        *xi = (1.0 - weight) * *xi + weight * ci;
    }
}

//! Communication-phase model: beamformers, per-UAV SINR and sum rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{path_gain, steering_toward, KronVector};
use crate::scenario::{ArrayGeometry, BeamMode, Point2, Scenario};
use crate::sensing::BeamCodebook;
use crate::state::{CommPower, Trajectory};

/// Communication beams indexed `[n][m][k]`.
pub type CommBeamformers = Vec<Vec<Vec<KronVector>>>;

/// Effective channel gains of one slot, `gains[m][k][i] = β_{m,k} |a_{m,k}^H w_{m,i}|²`:
/// the power UAV `k` receives from BS `m` per watt spent on the stream for UAV `i`.
pub type SlotGains = Vec<Vec<Vec<f64>>>;

/// Unit-norm beam from BS `v` toward a UAV at (`q`, `h`).
pub fn matched_beamformer(
    q: Point2,
    h: f64,
    v: Point2,
    geom: &ArrayGeometry,
    codebook: &BeamCodebook,
    mode: BeamMode,
) -> Result<KronVector> {
    let a = steering_toward(q, h, v, geom)?;
    match mode {
        BeamMode::Exact => Ok(a.normalized()),
        BeamMode::Quantized => {
            let dir = crate::geometry::direction_cosines(q, h, v)?;
            let idx = codebook.nearest(&dir);
            Ok(codebook.beams[idx].clone())
        }
    }
}

/// Matched beams for every slot, BS and UAV of a trajectory.
pub fn build_beamformers(
    s: &Scenario,
    traj: &Trajectory,
    codebook: &BeamCodebook,
    mode: BeamMode,
) -> Result<CommBeamformers> {
    (0..s.num_slots)
        .into_par_iter()
        .map(|n| {
            s.bs_positions
                .iter()
                .map(|&v| {
                    (0..s.num_uavs)
                        .map(|k| {
                            matched_beamformer(
                                traj.positions[k][n],
                                traj.altitudes[k],
                                v,
                                &s.array,
                                codebook,
                                mode,
                            )
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Effective gains of slot `n` at the given trajectory and beams.
pub fn slot_gains(
    s: &Scenario,
    traj: &Trajectory,
    beams: &CommBeamformers,
    n: usize,
) -> Result<SlotGains> {
    s.bs_positions
        .iter()
        .enumerate()
        .map(|(m, &v)| {
            (0..s.num_uavs)
                .map(|k| {
                    let q = traj.positions[k][n];
                    let h = traj.altitudes[k];
                    let beta = path_gain(q, h, v, s.ref_gain)?;
                    let a = steering_toward(q, h, v, &s.array)?;
                    Ok(beams[n][m]
                        .iter()
                        .map(|w| beta * a.inner(w).norm_sqr())
                        .collect())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

pub fn all_slot_gains(
    s: &Scenario,
    traj: &Trajectory,
    beams: &CommBeamformers,
) -> Result<Vec<SlotGains>> {
    (0..s.num_slots)
        .into_par_iter()
        .map(|n| slot_gains(s, traj, beams, n))
        .collect()
}

/// Received (signal, interference) power at UAV `k` for slot powers `eta[m][i]`.
pub fn signal_interference(gains: &SlotGains, eta: &[Vec<f64>], k: usize) -> (f64, f64) {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (gm, em) in gains.iter().zip(eta) {
        for (i, (g, e)) in gm[k].iter().zip(em).enumerate() {
            if i == k {
                signal += e * g;
            } else {
                interference += e * g;
            }
        }
    }
    (signal, interference)
}

/// SINR of UAV `k` given the slot gains and powers.
pub fn sinr_from_gains(gains: &SlotGains, eta: &[Vec<f64>], k: usize, noise: f64) -> f64 {
    let (sig, int) = signal_interference(gains, eta, k);
    sig / (int + noise)
}

/// Per-UAV spectral efficiencies `log2(1 + γ_k)` of one slot, before time weighting.
pub fn uav_rates(gains: &SlotGains, eta: &[Vec<f64>], noise: f64) -> Vec<f64> {
    let k_count = gains.first().map_or(0, |g| g.len());
    (0..k_count)
        .map(|k| (1.0 + sinr_from_gains(gains, eta, k, noise)).log2())
        .collect()
}

/// Communication SINR of UAV `k` in slot `n`.
pub fn comm_sinr(
    n: usize,
    k: usize,
    traj: &Trajectory,
    powers: &CommPower,
    beams: &CommBeamformers,
    s: &Scenario,
) -> Result<f64> {
    let gains = slot_gains(s, traj, beams, n)?;
    Ok(sinr_from_gains(&gains, &powers[n], k, s.noise_uav))
}

/// Sum rate of slot `n`, `(1 − δ) Σ_k log2(1 + γ_k)`.
pub fn slot_sum_rate(
    n: usize,
    traj: &Trajectory,
    powers: &CommPower,
    beams: &CommBeamformers,
    delta: f64,
    s: &Scenario,
) -> Result<f64> {
    let gains = slot_gains(s, traj, beams, n)?;
    Ok((1.0 - delta)
        * uav_rates(&gains, &powers[n], s.noise_uav)
            .iter()
            .sum::<f64>())
}

/// Un-weighted per-slot utilities `Σ_k log2(1 + γ_k[n])`.
pub fn slot_utilities(s: &Scenario, gains: &[SlotGains], powers: &CommPower) -> Vec<f64> {
    gains
        .iter()
        .zip(powers)
        .map(|(g, eta)| uav_rates(g, eta, s.noise_uav).iter().sum())
        .collect()
}

/// Mission objective `Σ_n (1 − δ[n]) u[n]`.
pub fn weighted_sum(utilities: &[f64], delta: &[f64]) -> f64 {
    utilities
        .iter()
        .zip(delta)
        .map(|(u, d)| (1.0 - d) * u)
        .sum()
}

/// Summary of per-slot communication performance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CommMetrics {
    /// `rates[n][k]`, time-weighted.
    pub rates: Vec<Vec<f64>>,
    pub slot_sum: Vec<f64>,
    pub total: f64,
}

pub fn comm_metrics(
    s: &Scenario,
    gains: &[SlotGains],
    powers: &CommPower,
    delta: &[f64],
) -> CommMetrics {
    let rates: Vec<Vec<f64>> = gains
        .iter()
        .zip(powers)
        .zip(delta)
        .map(|((g, eta), d)| {
            uav_rates(g, eta, s.noise_uav)
                .into_iter()
                .map(|r| (1.0 - d) * r)
                .collect()
        })
        .collect();
    let slot_sum: Vec<f64> = rates.iter().map(|r| r.iter().sum()).collect();
    let total = slot_sum.iter().sum();
    CommMetrics {
        rates,
        slot_sum,
        total,
    }
}

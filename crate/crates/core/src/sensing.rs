//! Sensing-phase model: beam codebook, bistatic reflection gains, per-bin
//! sensing SINR and radar mutual information.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{
    beam_at_angles, slant_distance_sq, steering_toward, DirectionCosines, KronVector,
};
use crate::scenario::{AngleGrid, ArrayGeometry, Point2, Scenario};
use crate::state::{SensingPower, Trajectory};

/// Grid of unit-norm scan beams, flattened as `q * L + l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamCodebook {
    pub zenith: Vec<f64>,
    pub azimuth: Vec<f64>,
    pub beams: Vec<KronVector>,
    directions: Vec<[f64; 3]>,
}

impl BeamCodebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    /// (zenith, azimuth) of beam `idx`.
    pub fn angles(&self, idx: usize) -> (f64, f64) {
        let l = self.azimuth.len();
        (self.zenith[idx / l], self.azimuth[idx % l])
    }

    /// Index of the beam closest in angle to `dir`; ties go to the lowest index.
    pub fn nearest(&self, dir: &DirectionCosines) -> usize {
        let u = dir.unit_vector();
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, d) in self.directions.iter().enumerate() {
            let dot = u[0] * d[0] + u[1] * d[1] + u[2] * d[2];
            if dot > best_dot {
                best_dot = dot;
                best = i;
            }
        }
        best
    }
}

pub fn build_codebook(
    geom: &ArrayGeometry,
    zenith: &AngleGrid,
    azimuth: &AngleGrid,
) -> BeamCodebook {
    let zs = zenith.values();
    let az = azimuth.values();
    let mut beams = Vec::with_capacity(zs.len() * az.len());
    let mut directions = Vec::with_capacity(zs.len() * az.len());
    for &t in &zs {
        for &p in &az {
            beams.push(beam_at_angles(t, p, geom));
            directions.push(DirectionCosines::from_angles(t, p).unit_vector());
        }
    }
    BeamCodebook {
        zenith: zs,
        azimuth: az,
        beams,
        directions,
    }
}

pub fn scenario_codebook(s: &Scenario) -> BeamCodebook {
    build_codebook(&s.array, &s.zenith_grid, &s.azimuth_grid)
}

/// Receive combiners `[m][ql]`. Without angle noise they coincide with the
/// scan beams; otherwise each bin's steering angles carry a seeded uniform
/// error with the configured standard deviation.
pub fn build_combiners(s: &Scenario, codebook: &BeamCodebook) -> Vec<Vec<KronVector>> {
    if s.combiner_angle_noise <= 0.0 {
        return vec![codebook.beams.clone(); s.num_bs];
    }
    let half = s.combiner_angle_noise * 3f64.sqrt();
    let dist = Uniform::new_inclusive(-half, half);
    let mut rng = ChaCha8Rng::seed_from_u64(s.combiner_seed);
    (0..s.num_bs)
        .map(|_| {
            (0..codebook.len())
                .map(|idx| {
                    let (t, p) = codebook.angles(idx);
                    let t = t + dist.sample(&mut rng);
                    let p = p + dist.sample(&mut rng);
                    beam_at_angles(t, p, &s.array)
                })
                .collect()
        })
        .collect()
}

/// Two-leg reflection gain `β0² / (d²(q, v_j) · d²(q, v_m))`.
pub fn bistatic_gain(q: Point2, h: f64, vj: Point2, vm: Point2, beta0: f64) -> Result<f64> {
    let dj = crate::geometry::path_gain(q, h, vj, 1.0)?;
    let dm = crate::geometry::path_gain(q, h, vm, 1.0)?;
    Ok(beta0 * beta0 * dj * dm)
}

/// Effective sensing couplings for one slot:
/// `coupling[m][ql][j] = Σ_k β^s_{j,m,k} |u_{m,ql}^H a_m(k)|² |a_j(k)^H w_{ql}|²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSensing {
    pub coupling: Vec<Vec<Vec<f64>>>,
}

impl SlotSensing {
    pub fn num_bs(&self) -> usize {
        self.coupling.len()
    }

    pub fn num_beams(&self) -> usize {
        self.coupling.first().map_or(0, |c| c.len())
    }

    /// (signal, interference) at BS `m`, bin `b` for slot powers `eta[j][b]`.
    pub fn signal_interference(&self, eta: &[Vec<f64>], m: usize, b: usize) -> (f64, f64) {
        let c = &self.coupling[m][b];
        let mut interference = 0.0;
        for (j, cj) in c.iter().enumerate() {
            if j != m {
                interference += eta[j][b] * cj;
            }
        }
        (eta[m][b] * c[m], interference)
    }

    pub fn sinr(&self, eta: &[Vec<f64>], m: usize, b: usize, noise: f64) -> f64 {
        let (s, i) = self.signal_interference(eta, m, b);
        s / (i + noise)
    }

    /// δ-slope of the slot's MI, `Σ_m Σ_b log2(1 + γ_{m,b})`.
    pub fn mi_slope(&self, eta: &[Vec<f64>], noise: f64) -> f64 {
        let mut total = 0.0;
        for m in 0..self.num_bs() {
            for b in 0..self.num_beams() {
                total += (1.0 + self.sinr(eta, m, b, noise)).log2();
            }
        }
        total
    }
}

/// Computes the coupling table of slot `n`.
pub fn slot_sensing(
    s: &Scenario,
    traj: &Trajectory,
    codebook: &BeamCodebook,
    combiners: &[Vec<KronVector>],
    n: usize,
) -> Result<SlotSensing> {
    let m_count = s.num_bs;
    let b_count = codebook.len();
    // tx[j][k][b] and rx[m][k][b] directional gains, inv_d2[j][k]
    let mut tx = vec![vec![vec![0.0; b_count]; s.num_uavs]; m_count];
    let mut rx = vec![vec![vec![0.0; b_count]; s.num_uavs]; m_count];
    let mut inv_d2 = vec![vec![0.0; s.num_uavs]; m_count];
    for (j, &v) in s.bs_positions.iter().enumerate() {
        for k in 0..s.num_uavs {
            let q = traj.positions[k][n];
            let h = traj.altitudes[k];
            inv_d2[j][k] = 1.0 / slant_distance_sq(q, h, v);
            let a = steering_toward(q, h, v, &s.array)?;
            for b in 0..b_count {
                tx[j][k][b] = a.inner(&codebook.beams[b]).norm_sqr();
                rx[j][k][b] = combiners[j][b].inner(&a).norm_sqr();
            }
        }
    }
    let beta2 = s.ref_gain * s.ref_gain;
    let coupling = (0..m_count)
        .map(|m| {
            (0..b_count)
                .map(|b| {
                    (0..m_count)
                        .map(|j| {
                            (0..s.num_uavs)
                                .map(|k| {
                                    beta2 * inv_d2[j][k] * inv_d2[m][k] * rx[m][k][b] * tx[j][k][b]
                                })
                                .sum()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(SlotSensing { coupling })
}

/// Coupling tables for every slot.
pub fn sensing_tables(
    s: &Scenario,
    traj: &Trajectory,
    codebook: &BeamCodebook,
    combiners: &[Vec<KronVector>],
) -> Result<Vec<SlotSensing>> {
    (0..s.num_slots)
        .into_par_iter()
        .map(|n| slot_sensing(s, traj, codebook, combiners, n))
        .collect()
}

/// Sensing SINR at BS `m` for bin `b` in slot `n`.
pub fn sensing_sinr(
    n: usize,
    m: usize,
    b: usize,
    traj: &Trajectory,
    powers: &SensingPower,
    codebook: &BeamCodebook,
    s: &Scenario,
) -> Result<f64> {
    let combiners = build_combiners(s, codebook);
    let table = slot_sensing(s, traj, codebook, &combiners, n)?;
    Ok(table.sinr(&powers[n], m, b, s.noise_bs))
}

/// Per-slot MI slopes `c[n]`.
pub fn mi_slopes(s: &Scenario, tables: &[SlotSensing], powers: &SensingPower) -> Vec<f64> {
    tables
        .par_iter()
        .zip(powers)
        .map(|(t, eta)| t.mi_slope(eta, s.noise_bs))
        .collect()
}

/// MI slope of slot `n`, in bits per unit δ.
pub fn radar_mi_per_slot(
    n: usize,
    traj: &Trajectory,
    powers: &SensingPower,
    codebook: &BeamCodebook,
    s: &Scenario,
) -> Result<f64> {
    let combiners = build_combiners(s, codebook);
    let table = slot_sensing(s, traj, codebook, &combiners, n)?;
    Ok(table.mi_slope(&powers[n], s.noise_bs))
}

/// `Σ_n δ[n] c[n]`.
pub fn cumulative_mi(slopes: &[f64], delta: &[f64]) -> f64 {
    slopes.iter().zip(delta).map(|(c, d)| c * d).sum()
}

pub fn cumulative_radar_mi(
    traj: &Trajectory,
    powers: &SensingPower,
    delta: &[f64],
    codebook: &BeamCodebook,
    s: &Scenario,
) -> Result<f64> {
    let combiners = build_combiners(s, codebook);
    let tables = sensing_tables(s, traj, codebook, &combiners)?;
    Ok(cumulative_mi(&mi_slopes(s, &tables, powers), delta))
}

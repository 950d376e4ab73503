//! Decision variables of the mission plan and their feasibility checks.

use serde::{Deserialize, Serialize};

use crate::scenario::{Point2, Scenario};

/// Communication powers `[n][m][k]` [W].
pub type CommPower = Vec<Vec<Vec<f64>>>;

/// Sensing powers `[n][m][b]` [W], `b = q * L + l`.
pub type SensingPower = Vec<Vec<Vec<f64>>>;

/// Horizontal UAV positions `positions[k][n]` with fixed altitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub altitudes: Vec<f64>,
    pub positions: Vec<Vec<Point2>>,
}

impl Trajectory {
    /// Constant-velocity straight lines from start to end, one point per slot.
    pub fn straight_line(s: &Scenario) -> Self {
        let n = s.num_slots;
        let positions = (0..s.num_uavs)
            .map(|k| {
                let a = s.uav_start[k];
                let b = s.uav_end[k];
                (0..n)
                    .map(|i| {
                        if i + 1 == n && n > 1 {
                            return b;
                        }
                        let t = if n > 1 {
                            i as f64 / (n - 1) as f64
                        } else {
                            0.0
                        };
                        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
                    })
                    .collect()
            })
            .collect();
        Self {
            altitudes: s.uav_altitudes.clone(),
            positions,
        }
    }

    pub fn num_uavs(&self) -> usize {
        self.positions.len()
    }

    pub fn num_slots(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    /// Speeds `[k][n]` for `n < N − 1`: `||q[n+1] − q[n]|| / τ`.
    pub fn speeds(&self, tau: f64) -> Vec<Vec<f64>> {
        self.positions
            .iter()
            .map(|p| p.windows(2).map(|w| dist(w[0], w[1]) / tau).collect())
            .collect()
    }

    /// Minimum 3D pairwise separation over all slots.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.num_uavs() {
            for j in (i + 1)..self.num_uavs() {
                let dh = self.altitudes[j] - self.altitudes[i];
                for n in 0..self.num_slots() {
                    let d = dist(self.positions[i][n], self.positions[j][n]);
                    best = best.min((d * d + dh * dh).sqrt());
                }
            }
        }
        best
    }

    /// Minimum horizontal distance between any UAV and any of `points`.
    pub fn min_distance_to(&self, points: &[Point2]) -> f64 {
        self.positions
            .iter()
            .flatten()
            .flat_map(|q| points.iter().map(move |v| dist(*q, *v)))
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn dist(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Equal split of the communication budget among UAVs.
pub fn uniform_comm_power(s: &Scenario) -> CommPower {
    let p = s.p_comm_max / s.num_uavs as f64;
    vec![vec![vec![p; s.num_uavs]; s.num_bs]; s.num_slots]
}

/// Equal per-bin sensing power that exhausts the slot budget at time split `delta`.
pub fn uniform_sensing_power(s: &Scenario, delta: f64) -> SensingPower {
    let p = s.p_sense_max / (delta * s.num_beams() as f64);
    vec![vec![vec![p; s.num_beams()]; s.num_bs]; s.num_slots]
}

/// Upper bound on δ[n] imposed by the sensing energy budget.
pub fn delta_upper_bound(s: &Scenario, eta_n: &[Vec<f64>]) -> f64 {
    let load = eta_n
        .iter()
        .map(|e| e.iter().sum::<f64>())
        .fold(0.0, f64::max);
    if load <= 0.0 {
        s.delta_max
    } else {
        s.delta_max.min(s.p_sense_max / load)
    }
}

/// Largest violation of each constraint family, in native units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub comm_power: f64,
    pub sensing_energy: f64,
    pub delta_box: f64,
    pub endpoints: f64,
    pub speed: f64,
    pub separation: f64,
    pub negative_power: f64,
}

impl Violations {
    pub fn max(&self) -> f64 {
        [
            self.comm_power,
            self.sensing_energy,
            self.delta_box,
            self.endpoints,
            self.speed,
            self.separation,
            self.negative_power,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Checks power, energy, time-split, endpoint, speed and separation constraints.
pub fn violations(
    s: &Scenario,
    traj: &Trajectory,
    pc: &CommPower,
    ps: &SensingPower,
    delta: &[f64],
) -> Violations {
    let mut v = Violations::default();
    for n in 0..s.num_slots {
        for m in 0..s.num_bs {
            let total: f64 = pc[n][m].iter().sum();
            v.comm_power = v.comm_power.max(total - s.p_comm_max);
            let sense: f64 = ps[n][m].iter().sum();
            v.sensing_energy = v.sensing_energy.max(delta[n] * sense - s.p_sense_max);
            let neg = pc[n][m]
                .iter()
                .chain(&ps[n][m])
                .fold(0.0, |acc: f64, &x| acc.max(-x));
            v.negative_power = v.negative_power.max(neg);
        }
        v.delta_box = v
            .delta_box
            .max(s.delta_min - delta[n])
            .max(delta[n] - s.delta_max);
    }
    v.endpoints = trajectory_endpoint_error(s, traj);
    v.speed = traj
        .speeds(s.slot_length())
        .iter()
        .flatten()
        .fold(0.0, |acc: f64, sp| acc.max(sp - s.v_max));
    v.separation = (s.d_min - traj.min_separation()).max(0.0);
    v
}

pub fn trajectory_endpoint_error(s: &Scenario, traj: &Trajectory) -> f64 {
    let n = s.num_slots;
    (0..s.num_uavs)
        .map(|k| {
            dist(traj.positions[k][0], s.uav_start[k])
                .max(dist(traj.positions[k][n - 1], s.uav_end[k]))
        })
        .fold(0.0, f64::max)
}

/// First (slot, i, j) at which the separation constraint fails.
pub fn first_separation_violation(
    s: &Scenario,
    traj: &Trajectory,
) -> Option<(usize, usize, usize)> {
    let d2 = s.d_min * s.d_min;
    for n in 0..s.num_slots {
        for i in 0..s.num_uavs {
            for j in (i + 1)..s.num_uavs {
                let dh = traj.altitudes[j] - traj.altitudes[i];
                let d = dist(traj.positions[i][n], traj.positions[j][n]);
                if d * d + dh * dh < d2 {
                    return Some((n, i, j));
                }
            }
        }
    }
    None
}

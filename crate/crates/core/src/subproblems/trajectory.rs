//! Trajectory update: trust-region SCA with alternating position (q) and
//! epigraph (z) steps.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use super::ModelContext;
use crate::comm::CommBeamformers;
use crate::error::{PlannerError, Result};
use crate::geometry::{gain_toward, slant_distance_sq, AffineGain};
use crate::scenario::{Point2, Scenario};
use crate::solver::{
    find_strictly_feasible, solve_concave_program, AffineConstraint, BallConstraint,
    BarrierOptions, ConcaveProgram, LogTerm, SeparableConcave, SolveReport, SparseRow,
};
use crate::sensing::slot_sensing;
use crate::state::{violations, CommPower, SensingPower, Trajectory};
use rayon::prelude::*;

/// Relative slack added to rows that are tight at the incumbent so that it
/// is a strict interior point.
const ROW_RELAX: f64 = 1e-9;

/// Objective cost per bit of MI-row shortfall.
const MI_PENALTY: f64 = 1e4;

/// Central-difference step for the MI gradient [m].
const MI_FD_STEP: f64 = 1e-2;

/// Epigraph variables `z[m][k][n]` bounding the squared slant ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpigraphState {
    pub z: Vec<Vec<Vec<f64>>>,
}

impl EpigraphState {
    /// Tight epigraph at `traj`.
    pub fn tight(s: &Scenario, traj: &Trajectory) -> Self {
        let z = s
            .bs_positions
            .iter()
            .map(|&v| {
                (0..s.num_uavs)
                    .map(|k| {
                        traj.positions[k]
                            .iter()
                            .map(|&q| slant_distance_sq(q, traj.altitudes[k], v))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { z }
    }

    /// Largest `H² + ||q − v||² − z`; nonpositive when every bound holds.
    pub fn max_residual(&self, s: &Scenario, traj: &Trajectory) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (m, &v) in s.bs_positions.iter().enumerate() {
            for k in 0..s.num_uavs {
                for (n, &q) in traj.positions[k].iter().enumerate() {
                    worst = worst.max(slant_distance_sq(q, traj.altitudes[k], v) - self.z[m][k][n]);
                }
            }
        }
        worst
    }
}

/// Trust-region schedule of the trajectory loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionState {
    /// Initial radius of every outer iteration [m].
    pub radius: f64,
    /// Inner loop stops once the radius falls below this [m].
    pub floor: f64,
    pub shrink: f64,
    /// Inner loop stops after an accepted step gaining less than this.
    pub inner_tol: f64,
    /// Outer loop stops once the relative gain falls below this.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl TrustRegionState {
    pub fn for_scenario(s: &Scenario) -> Self {
        Self {
            radius: s.max_step(),
            floor: 1e-2,
            shrink: 0.5,
            inner_tol: 1e-3,
            outer_tol: 1e-3,
            max_outer: 20,
            max_inner: 40,
        }
    }
}

/// Tangent of `1/z` at `z_ref`, a global lower bound on `z > 0`.
pub fn inv_z_tangent(z: f64, z_ref: f64) -> f64 {
    1.0 / z_ref - (z - z_ref) / (z_ref * z_ref)
}

/// Linearized separation row `2 Δᵀ (q_j − q_i) ≥ rhs` between UAVs `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionRow {
    /// `Δ = q_j − q_i` at the anchor.
    pub delta: Point2,
    /// `D_min² − (H_j − H_i)² + ||Δ||²`.
    pub rhs: f64,
}

impl CollisionRow {
    pub fn lhs(&self, qi: Point2, qj: Point2) -> f64 {
        2.0 * (self.delta[0] * (qj[0] - qi[0]) + self.delta[1] * (qj[1] - qi[1]))
    }

    pub fn slack(&self, qi: Point2, qj: Point2) -> f64 {
        self.lhs(qi, qj) - self.rhs
    }
}

/// First-order inner approximation of the separation constraint between
/// UAVs `i` and `j` in `slot`, expanded at the anchor positions.
pub fn collision_linearization(
    slot: usize,
    (i, qi, hi): (usize, Point2, f64),
    (j, qj, hj): (usize, Point2, f64),
    d_min: f64,
) -> Result<CollisionRow> {
    let delta = [qj[0] - qi[0], qj[1] - qi[1]];
    let norm2 = delta[0] * delta[0] + delta[1] * delta[1];
    let need = d_min * d_min - (hj - hi) * (hj - hi);
    if norm2 == 0.0 && need > 0.0 {
        return Err(PlannerError::DegenerateAnchor { i, j, slot });
    }
    Ok(CollisionRow {
        delta,
        rhs: need + norm2,
    })
}

/// Affine models `[n][m][k][i]` of the directional gains seen by UAV `k`
/// from BS `m` on the beam serving UAV `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainModel {
    pub gains: Vec<Vec<Vec<Vec<AffineGain>>>>,
}

impl GainModel {
    pub fn build(s: &Scenario, anchor: &Trajectory, beams: &CommBeamformers) -> Result<Self> {
        use rayon::prelude::*;
        let gains = (0..s.num_slots)
            .into_par_iter()
            .map(|n| {
                s.bs_positions
                    .iter()
                    .enumerate()
                    .map(|(m, &v)| {
                        (0..s.num_uavs)
                            .map(|k| {
                                beams[n][m]
                                    .iter()
                                    .map(|w| {
                                        AffineGain::build(
                                            anchor.positions[k][n],
                                            anchor.altitudes[k],
                                            v,
                                            &s.array,
                                            w,
                                        )
                                    })
                                    .collect::<Result<Vec<_>>>()
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { gains })
    }
}

/// Received (signal + interference, interference) of UAV `k` in slot `n` as
/// affine functions of its position: `(S0, ∇S, I0, ∇I)` at the model anchor,
/// given per-BS inverse range factors `inv[m]`.
fn affine_sums(
    s: &Scenario,
    model: &GainModel,
    eta: &[Vec<f64>],
    n: usize,
    k: usize,
    inv: &[f64],
) -> (f64, [f64; 2], f64, [f64; 2]) {
    let mut s0 = 0.0;
    let mut sg = [0.0; 2];
    let mut i0 = 0.0;
    let mut ig = [0.0; 2];
    for m in 0..s.num_bs {
        for i in 0..s.num_uavs {
            let g = &model.gains[n][m][k][i];
            let c = s.ref_gain * eta[m][i] * inv[m];
            // express around the origin: g(q) = value − grad·anchor + grad·q
            let base = g.value - g.grad[0] * g.anchor[0] - g.grad[1] * g.anchor[1];
            s0 += c * base;
            sg[0] += c * g.grad[0];
            sg[1] += c * g.grad[1];
            if i != k {
                i0 += c * base;
                ig[0] += c * g.grad[0];
                ig[1] += c * g.grad[1];
            }
        }
    }
    (s0, sg, i0, ig)
}

/// Concave rate surrogates of the q- and z-steps for fixed powers, time
/// split and gain model.
#[derive(Clone, Copy)]
pub struct RateSurrogate<'a> {
    pub scenario: &'a Scenario,
    pub model: &'a GainModel,
    pub powers: &'a CommPower,
    pub delta: &'a [f64],
}

impl RateSurrogate<'_> {
    fn inv_fixed(&self, z: &EpigraphState, n: usize, k: usize) -> Vec<f64> {
        (0..self.scenario.num_bs)
            .map(|m| 1.0 / z.z[m][k][n])
            .collect()
    }

    fn sums_at(&self, n: usize, k: usize, q: Point2, inv: &[f64]) -> (f64, f64) {
        let (s0, sg, i0, ig) = affine_sums(self.scenario, self.model, &self.powers[n], n, k, inv);
        (
            s0 + sg[0] * q[0] + sg[1] * q[1],
            i0 + ig[0] * q[0] + ig[1] * q[1],
        )
    }

    /// Reference points `y[k][n] = I(q) + σ²` at `traj` with `1/z` fixed.
    pub fn reference(&self, traj: &Trajectory, z: &EpigraphState) -> Vec<Vec<f64>> {
        (0..self.scenario.num_uavs)
            .map(|k| {
                (0..self.scenario.num_slots)
                    .map(|n| {
                        let inv = self.inv_fixed(z, n, k);
                        self.sums_at(n, k, traj.positions[k][n], &inv).1 + self.scenario.noise_uav
                    })
                    .collect()
            })
            .collect()
    }

    fn term(&self, sum: f64, int: f64, y: f64) -> f64 {
        let noise = self.scenario.noise_uav;
        let arg = sum + noise;
        if arg <= 0.0 {
            return f64::NEG_INFINITY;
        }
        arg.log2() - (y.log2() + (int + noise - y) / (y * LN_2))
    }

    /// q-step surrogate `Σ_n (1 − δ[n]) Σ_k R̃^(q)_k[n]` at `traj`.
    pub fn q_value(&self, traj: &Trajectory, z: &EpigraphState, y: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for n in 0..self.scenario.num_slots {
            let w = 1.0 - self.delta[n];
            for k in 0..self.scenario.num_uavs {
                let inv = self.inv_fixed(z, n, k);
                let (sum, int) = self.sums_at(n, k, traj.positions[k][n], &inv);
                total += w * self.term(sum, int, y[k][n]);
            }
        }
        total
    }

    /// Gradient `[k][n]` of the q-step surrogate.
    pub fn q_gradient(
        &self,
        traj: &Trajectory,
        z: &EpigraphState,
        y: &[Vec<f64>],
    ) -> Vec<Vec<[f64; 2]>> {
        let noise = self.scenario.noise_uav;
        (0..self.scenario.num_uavs)
            .map(|k| {
                (0..self.scenario.num_slots)
                    .map(|n| {
                        let w = 1.0 - self.delta[n];
                        let inv = self.inv_fixed(z, n, k);
                        let (s0, sg, _, ig) =
                            affine_sums(self.scenario, self.model, &self.powers[n], n, k, &inv);
                        let q = traj.positions[k][n];
                        let arg = s0 + sg[0] * q[0] + sg[1] * q[1] + noise;
                        let yk = y[k][n];
                        [0, 1].map(|d| w * (sg[d] / (arg * LN_2) - ig[d] / (yk * LN_2)))
                    })
                    .collect()
            })
            .collect()
    }

    /// z-step surrogate at positions `traj`, epigraph `z`, tangent point `z_ref`.
    pub fn z_value(
        &self,
        traj: &Trajectory,
        z: &EpigraphState,
        z_ref: &EpigraphState,
        y: &[Vec<f64>],
    ) -> f64 {
        let mut total = 0.0;
        for n in 0..self.scenario.num_slots {
            let w = 1.0 - self.delta[n];
            for k in 0..self.scenario.num_uavs {
                let inv: Vec<f64> = (0..self.scenario.num_bs)
                    .map(|m| inv_z_tangent(z.z[m][k][n], z_ref.z[m][k][n]))
                    .collect();
                let (sum, int) = self.sums_at(n, k, traj.positions[k][n], &inv);
                total += w * self.term(sum, int, y[k][n]);
            }
        }
        total
    }
}

/// Exact `(1 − δ)`-weighted rate with exact gains but slant ranges replaced
/// by the epigraph values.
pub fn rate_with_fixed_ranges(
    s: &Scenario,
    traj: &Trajectory,
    powers: &CommPower,
    beams: &CommBeamformers,
    delta: &[f64],
    z: &EpigraphState,
) -> Result<f64> {
    let mut total = 0.0;
    for n in 0..s.num_slots {
        for k in 0..s.num_uavs {
            let mut sig = 0.0;
            let mut int = 0.0;
            for (m, &v) in s.bs_positions.iter().enumerate() {
                for i in 0..s.num_uavs {
                    let g = gain_toward(
                        traj.positions[k][n],
                        traj.altitudes[k],
                        v,
                        &s.array,
                        &beams[n][m][i],
                    )?;
                    let p = s.ref_gain * powers[n][m][i] * g / z.z[m][k][n];
                    if i == k {
                        sig += p;
                    } else {
                        int += p;
                    }
                }
            }
            total += (1.0 - delta[n]) * (1.0 + sig / (int + s.noise_uav)).log2();
        }
    }
    Ok(total)
}

/// Everything the q-step program depends on.
pub struct QStepInput<'a> {
    pub surrogate: RateSurrogate<'a>,
    pub incumbent: &'a Trajectory,
    pub z: &'a EpigraphState,
    /// Reference points `[k][n]`.
    pub reference: &'a [Vec<f64>],
    pub radius: f64,
    /// Optional first-order MI row.
    pub mi_row: Option<&'a MiRow>,
}

/// First-order model `Σ grad[k][n] · (q_k[n] − q̂_k[n]) ≥ rhs` of the
/// cumulative MI around the incumbent.
#[derive(Debug, Clone, PartialEq)]
pub struct MiRow {
    /// `[k][n]`; endpoint slots are ignored.
    pub grad: Vec<Vec<[f64; 2]>>,
    pub rhs: f64,
}

/// Gradient of `Σ_n δ[n] c[n]` in every position, by central differences
/// with the sensing powers held fixed.
pub fn mi_gradient(
    ctx: &ModelContext,
    traj: &Trajectory,
    ps: &SensingPower,
    delta: &[f64],
) -> Result<Vec<Vec<[f64; 2]>>> {
    let s = &ctx.scenario;
    let per_slot: Vec<Vec<[f64; 2]>> = (0..s.num_slots)
        .into_par_iter()
        .map(|n| {
            let mut probe = traj.clone();
            let slot_mi = |probe: &Trajectory| -> Result<f64> {
                let table = slot_sensing(s, probe, &ctx.codebook, &ctx.combiners, n)?;
                Ok(delta[n] * table.mi_slope(&ps[n], s.noise_bs))
            };
            let mut g = vec![[0.0; 2]; s.num_uavs];
            for (k, gk) in g.iter_mut().enumerate() {
                for d in 0..2 {
                    let q0 = traj.positions[k][n][d];
                    probe.positions[k][n][d] = q0 + MI_FD_STEP;
                    let up = slot_mi(&probe)?;
                    probe.positions[k][n][d] = q0 - MI_FD_STEP;
                    let down = slot_mi(&probe)?;
                    probe.positions[k][n][d] = q0;
                    gk[d] = (up - down) / (2.0 * MI_FD_STEP);
                }
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    Ok((0..s.num_uavs)
        .map(|k| per_slot.iter().map(|g| g[k]).collect())
        .collect())
}

fn model_change(grad: &[Vec<[f64; 2]>], from: &Trajectory, to: &Trajectory) -> f64 {
    let mut total = 0.0;
    for (k, gk) in grad.iter().enumerate() {
        for (n, g) in gk.iter().enumerate() {
            let a = from.positions[k][n];
            let b = to.positions[k][n];
            total += g[0] * (b[0] - a[0]) + g[1] * (b[1] - a[1]);
        }
    }
    total
}

/// Largest squared per-waypoint displacement.
fn max_step_sq(from: &Trajectory, to: &Trajectory) -> f64 {
    from.positions
        .iter()
        .zip(&to.positions)
        .flat_map(|(a, b)| a.iter().zip(b))
        .map(|(p, q)| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2))
        .fold(0.0, f64::max)
}

/// Solves the convex position program and returns the candidate trajectory.
/// Endpoint slots are fixed and eliminated from the variables.
pub fn q_step(input: &QStepInput) -> Result<(Trajectory, SolveReport)> {
    let sur = &input.surrogate;
    let s = sur.scenario;
    let inc = input.incumbent;
    let n_slots = s.num_slots;
    let k_count = s.num_uavs;
    if n_slots <= 2 {
        let value = sur.q_value(inc, input.z, input.reference);
        return Ok((inc.clone(), super::unchanged_report(value)));
    }
    let interior = n_slots - 2;
    let nv = interior * k_count * 2;
    let var = |n: usize, k: usize, d: usize| ((n - 1) * k_count + k) * 2 + d;
    let is_free = |n: usize| n >= 1 && n + 1 < n_slots;

    // the MI row carries an elastic variable so the incumbent stays a strict
    // interior start
    let elastic = input.mi_row.map(|_| nv);
    let n_all = nv + usize::from(elastic.is_some());
    let mut f = SeparableConcave::new(n_all);
    for n in 0..n_slots {
        let w = 1.0 - sur.delta[n];
        for k in 0..k_count {
            let y = input.reference[k][n];
            if !is_free(n) {
                let inv = sur.inv_fixed(input.z, n, k);
                let (sum, int) = sur.sums_at(n, k, inc.positions[k][n], &inv);
                f.constant += w * sur.term(sum, int, y);
                continue;
            }
            let inv = sur.inv_fixed(input.z, n, k);
            let (s0, sg, i0, ig) = affine_sums(s, sur.model, &sur.powers[n], n, k, &inv);
            let (ix, iy) = (var(n, k, 0), var(n, k, 1));
            let (idx, val): (Vec<usize>, Vec<f64>) = [(ix, sg[0]), (iy, sg[1])]
                .into_iter()
                .filter(|e| e.1 != 0.0)
                .unzip();
            let offset = s0 + s.noise_uav;
            if idx.is_empty() {
                f.constant += w * offset.log2();
            } else {
                f.logs.push(LogTerm {
                    weight: w / LN_2,
                    offset,
                    row: SparseRow::new(idx, val),
                });
            }
            let scale = w / (y * LN_2);
            f.linear[ix] -= scale * ig[0];
            f.linear[iy] -= scale * ig[1];
            f.constant -= w * y.log2() + scale * (i0 + s.noise_uav - y);
        }
    }

    if let Some(e) = elastic {
        f.linear[e] = -MI_PENALTY;
    }
    let mut p = ConcaveProgram::new(n_all, &f);
    let step_sq = s.max_step().powi(2) * (1.0 + ROW_RELAX);
    for k in 0..k_count {
        let h = inc.altitudes[k];
        for n in 1..n_slots - 1 {
            let idx = vec![var(n, k, 0), var(n, k, 1)];
            for (m, &v) in s.bs_positions.iter().enumerate() {
                let r2 = input.z.z[m][k][n] * (1.0 + ROW_RELAX) - h * h;
                p.balls
                    .push(BallConstraint::new(idx.clone(), v.to_vec(), r2));
            }
            p.balls.push(BallConstraint::new(
                idx.clone(),
                inc.positions[k][n].to_vec(),
                input.radius * input.radius,
            ));
        }
        for n in 0..n_slots - 1 {
            match (is_free(n), is_free(n + 1)) {
                (true, true) => p.balls.push(BallConstraint::difference(
                    vec![var(n + 1, k, 0), var(n + 1, k, 1)],
                    vec![var(n, k, 0), var(n, k, 1)],
                    vec![0.0, 0.0],
                    step_sq,
                )),
                (false, true) => p.balls.push(BallConstraint::new(
                    vec![var(n + 1, k, 0), var(n + 1, k, 1)],
                    inc.positions[k][n].to_vec(),
                    step_sq,
                )),
                (true, false) => p.balls.push(BallConstraint::new(
                    vec![var(n, k, 0), var(n, k, 1)],
                    inc.positions[k][n + 1].to_vec(),
                    step_sq,
                )),
                (false, false) => {}
            }
        }
    }
    let relax = ROW_RELAX * s.d_min * s.d_min;
    for n in 1..n_slots - 1 {
        for i in 0..k_count {
            for j in (i + 1)..k_count {
                let row = collision_linearization(
                    n,
                    (i, inc.positions[i][n], inc.altitudes[i]),
                    (j, inc.positions[j][n], inc.altitudes[j]),
                    s.d_min,
                )?;
                let (dx, dy) = (row.delta[0], row.delta[1]);
                if dx == 0.0 && dy == 0.0 {
                    continue;
                }
                // 2Δ·(q_j − q_i) ≥ rhs  ⇔  2Δ·q_i − 2Δ·q_j ≤ −rhs
                p.affine.push(AffineConstraint::le(
                    SparseRow::new(
                        vec![var(n, i, 0), var(n, i, 1), var(n, j, 0), var(n, j, 1)],
                        vec![2.0 * dx, 2.0 * dy, -2.0 * dx, -2.0 * dy],
                    ),
                    -row.rhs + relax,
                ));
            }
        }
    }

    if let (Some(row), Some(e)) = (input.mi_row, elastic) {
        // −Σ g·q − σ ≤ −rhs − Σ g·q̂, σ ≥ 0
        let mut idx = Vec::new();
        let mut val = Vec::new();
        let mut rhs = -row.rhs;
        for n in 1..n_slots - 1 {
            for k in 0..k_count {
                for d in 0..2 {
                    let g = row.grad[k][n][d];
                    if g != 0.0 {
                        idx.push(var(n, k, d));
                        val.push(-g);
                        rhs -= g * inc.positions[k][n][d];
                    }
                }
            }
        }
        idx.push(e);
        val.push(-1.0);
        p.affine.push(AffineConstraint::le(SparseRow::new(idx, val), rhs));
        p.affine.push(AffineConstraint::lower(e, 0.0));
    }

    let mut x0 = vec![0.0; n_all];
    if let (Some(row), Some(e)) = (input.mi_row, elastic) {
        x0[e] = row.rhs.max(0.0) + 1.0;
    }
    for n in 1..n_slots - 1 {
        for k in 0..k_count {
            x0[var(n, k, 0)] = inc.positions[k][n][0];
            x0[var(n, k, 1)] = inc.positions[k][n][1];
        }
    }
    let opts = BarrierOptions {
        refine_kkt: false,
        ..BarrierOptions::default()
    };
    let x0 = find_strictly_feasible(&p, &x0, &opts)?;
    let rep = solve_concave_program(&p, &x0, &opts)?;
    let mut cand = inc.clone();
    for n in 1..n_slots - 1 {
        for k in 0..k_count {
            cand.positions[k][n] = [rep.x[var(n, k, 0)], rep.x[var(n, k, 1)]];
        }
    }
    Ok((cand, rep))
}

/// Closed-form epigraph update: every bound tight at `traj`.
pub fn z_step(s: &Scenario, traj: &Trajectory) -> EpigraphState {
    EpigraphState::tight(s, traj)
}

/// Summary of one trajectory block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTrace {
    pub trajectory: Trajectory,
    pub objective_before: f64,
    pub objective_after: f64,
    pub outer_iterations: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub final_radius: f64,
}

/// Runs the trust-region loop from `traj` with everything else fixed. A
/// candidate is accepted only if the exact objective increases, the motion
/// and separation constraints hold and the cumulative MI stays at or above
/// the requirement.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_step(
    ctx: &ModelContext,
    traj: &Trajectory,
    pc: &CommPower,
    ps: &SensingPower,
    delta: &[f64],
    beams: &CommBeamformers,
    tr: &TrustRegionState,
) -> Result<TrajectoryTrace> {
    let s = &ctx.scenario;
    let start_obj = ctx.objective(traj, pc, beams, delta)?;
    let mut trace = TrajectoryTrace {
        trajectory: traj.clone(),
        objective_before: start_obj,
        objective_after: start_obj,
        outer_iterations: 0,
        accepted: 0,
        rejected: 0,
        final_radius: tr.radius,
    };
    if s.num_slots <= 2 {
        return Ok(trace);
    }
    let mi_floor = if s.mi_threshold > 0.0 {
        s.mi_threshold.min(ctx.cumulative_mi(traj, ps, delta)?)
    } else {
        f64::NEG_INFINITY
    };
    let base_viol = violations(s, traj, pc, ps, delta);
    let motion_ok = |cand: &Trajectory| -> bool {
        let v = violations(s, cand, pc, ps, delta);
        v.speed <= base_viol.speed.max(1e-7) && v.separation <= base_viol.separation.max(1e-7)
    };
    let mi_aware = mi_floor.is_finite();
    // bits per m², grown from the observed error of the MI row
    let mut curvature = 0.0f64;

    let mut best = traj.clone();
    let mut best_obj = start_obj;
    let mut radius = tr.radius;
    for _outer in 0..tr.max_outer {
        trace.outer_iterations += 1;
        let mut model = GainModel::build(s, &best, beams)?;
        radius = tr.radius;
        let mut inc = best.clone();
        let mut inc_obj = best_obj;
        let mut z = z_step(s, &inc);
        let mut inc_mi = if mi_aware { ctx.cumulative_mi(&inc, ps, delta)? } else { 0.0 };
        let mut grad = if mi_aware { Some(mi_gradient(ctx, &inc, ps, delta)?) } else { None };
        for _inner in 0..tr.max_inner {
            let sur = RateSurrogate {
                scenario: s,
                model: &model,
                powers: pc,
                delta,
            };
            let y = sur.reference(&inc, &z);
            let row = grad.as_ref().map(|g| MiRow {
                grad: g.clone(),
                rhs: (mi_floor - inc_mi) + curvature * radius * radius,
            });
            let input = QStepInput {
                surrogate: sur,
                incumbent: &inc,
                z: &z,
                reference: &y,
                radius,
                mi_row: row.as_ref(),
            };
            let qres = q_step(&input);
            let cand = match qres {
                Ok((cand, _)) => Some(cand),
                // the incumbent left the domain of the gain model
                Err(PlannerError::InfeasibleStart { .. }) => {
                    trace.rejected += 1;
                    break;
                }
                Err(e) if e.is_infeasibility() || matches!(e, PlannerError::SolverFailure(_)) => None,
                Err(e) => return Err(e),
            };
            let mut scored = None;
            if let Some(c) = cand {
                let obj = ctx.objective(&c, pc, beams, delta).ok().filter(|v| *v > inc_obj);
                if let Some(v) = obj.filter(|_| motion_ok(&c)) {
                    if mi_aware {
                        if let Ok(mi) = ctx.cumulative_mi(&c, ps, delta) {
                            if mi >= mi_floor - 1e-9 {
                                scored = Some((c, v, mi));
                            } else if let Some(g) = &grad {
                                let predicted = inc_mi + model_change(g, &inc, &c);
                                let step_sq = max_step_sq(&inc, &c).max(1e-12);
                                curvature = curvature.max((predicted - mi) / step_sq);
                            }
                        }
                    } else {
                        scored = Some((c, v, 0.0));
                    }
                }
            }
            match scored {
                Some((c, v, mi)) => {
                    let gain = v - inc_obj;
                    inc = c;
                    inc_obj = v;
                    inc_mi = mi;
                    trace.accepted += 1;
                    z = z_step(s, &inc);
                    model = GainModel::build(s, &inc, beams)?;
                    if gain < tr.inner_tol {
                        break;
                    }
                    if mi_aware {
                        grad = Some(mi_gradient(ctx, &inc, ps, delta)?);
                    }
                }
                None => {
                    trace.rejected += 1;
                    radius *= tr.shrink;
                    if radius < tr.floor {
                        break;
                    }
                }
            }
        }
        let gain = inc_obj - best_obj;
        best = inc;
        best_obj = inc_obj;
        if gain <= tr.outer_tol * best_obj.abs().max(1e-12) {
            break;
        }
    }
    trace.trajectory = best;
    trace.objective_after = best_obj;
    trace.final_radius = radius;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::build_beamformers;
    use crate::state::{uniform_comm_power, uniform_sensing_power};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_link(n: usize) -> Scenario {
        let mut s = Scenario::setting1()
            .with_num_slots(n)
            .with_mi_threshold(0.0);
        s.num_uavs = 1;
        s.num_bs = 1;
        s.uav_altitudes.truncate(1);
        s.uav_start = vec![[-300.0, 300.0]];
        s.uav_end = vec![[300.0, 300.0]];
        s.bs_positions = vec![[0.0, 0.0]];
        s
    }

    #[test]
    fn inverse_tangent_examples() {
        assert_eq!(inv_z_tangent(2.0, 2.0), 0.5);
        assert_eq!(inv_z_tangent(4.0, 2.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let zr = rng.gen_range(1.0..1e6);
            let z = rng.gen_range(1.0..1e6);
            assert!(inv_z_tangent(z, zr) <= 1.0 / z + 1e-15);
        }
    }

    #[test]
    fn collision_row_examples() {
        let row = collision_linearization(0, (0, [0.0, 0.0], 100.0), (1, [20.0, 0.0], 100.0), 20.0)
            .unwrap();
        assert_eq!(row.rhs, 800.0);
        assert_eq!(row.slack([0.0, 0.0], [20.0, 0.0]), 0.0);
        let row = collision_linearization(0, (0, [0.0, 0.0], 100.0), (1, [5.0, 0.0], 130.0), 20.0)
            .unwrap();
        assert!(row.rhs <= 25.0);
        assert!(matches!(
            collision_linearization(2, (0, [1.0, 1.0], 100.0), (1, [1.0, 1.0], 100.0), 20.0),
            Err(PlannerError::DegenerateAnchor {
                i: 0,
                j: 1,
                slot: 2
            })
        ));
    }

    #[test]
    fn collision_row_implies_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 20.0;
        for _ in 0..500 {
            let qi = [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)];
            let qj = [
                qi[0] + rng.gen_range(-40.0..40.0),
                qi[1] + rng.gen_range(-40.0..40.0),
            ];
            let (hi, hj) = (100.0, rng.gen_range(90.0..110.0));
            let row = collision_linearization(0, (0, qi, hi), (1, qj, hj), d).unwrap();
            for _ in 0..20 {
                let pi = [
                    qi[0] + rng.gen_range(-30.0..30.0),
                    qi[1] + rng.gen_range(-30.0..30.0),
                ];
                let pj = [
                    qj[0] + rng.gen_range(-30.0..30.0),
                    qj[1] + rng.gen_range(-30.0..30.0),
                ];
                if row.slack(pi, pj) >= 0.0 {
                    let sep = (pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2) + (hj - hi).powi(2);
                    assert!(sep >= d * d - 1e-9);
                }
            }
        }
    }

    #[test]
    fn overhead_epigraph_is_altitude_squared() {
        let mut s = single_link(3);
        s.uav_altitudes = vec![80.0];
        let mut traj = Trajectory::straight_line(&s);
        traj.positions[0][1] = [0.0, 0.0];
        assert_eq!(z_step(&s, &traj).z[0][0][1], 6400.0);
    }

    fn surrogate_fixture(s: &Scenario) -> (Trajectory, CommPower, CommBeamformers, Vec<f64>) {
        let traj = Trajectory::straight_line(s);
        let ctx = ModelContext::new(s.clone());
        let beams = build_beamformers(s, &traj, &ctx.codebook, s.beam_mode).unwrap();
        (traj, uniform_comm_power(s), beams, vec![0.3; s.num_slots])
    }

    #[test]
    fn q_surrogate_is_tangent() {
        let s = Scenario::setting1().with_num_slots(6);
        let (traj, pc, beams, delta) = surrogate_fixture(&s);
        let model = GainModel::build(&s, &traj, &beams).unwrap();
        let sur = RateSurrogate {
            scenario: &s,
            model: &model,
            powers: &pc,
            delta: &delta,
        };
        let z = z_step(&s, &traj);
        let y = sur.reference(&traj, &z);
        let exact = rate_with_fixed_ranges(&s, &traj, &pc, &beams, &delta, &z).unwrap();
        let ctx = ModelContext::new(s.clone());
        let true_obj = ctx.objective(&traj, &pc, &beams, &delta).unwrap();
        assert!((sur.q_value(&traj, &z, &y) - exact).abs() < 1e-10 * exact.abs().max(1.0));
        assert!((exact - true_obj).abs() < 1e-10 * exact.abs().max(1.0));
        assert!((sur.z_value(&traj, &z, &z, &y) - exact).abs() < 1e-10 * exact.abs().max(1.0));
    }

    #[test]
    fn tiny_trust_region_returns_anchor() {
        let s = Scenario::setting1().with_num_slots(6);
        let (traj, pc, beams, delta) = surrogate_fixture(&s);
        let model = GainModel::build(&s, &traj, &beams).unwrap();
        let sur = RateSurrogate {
            scenario: &s,
            model: &model,
            powers: &pc,
            delta: &delta,
        };
        let z = z_step(&s, &traj);
        let y = sur.reference(&traj, &z);
        let (cand, _) = q_step(&QStepInput {
            surrogate: sur,
            incumbent: &traj,
            z: &z,
            reference: &y,
            radius: 1e-9,
            mi_row: None,
        })
        .unwrap();
        for k in 0..s.num_uavs {
            for n in 0..s.num_slots {
                let (a, b) = (cand.positions[k][n], traj.positions[k][n]);
                assert!((a[0] - b[0]).hypot(a[1] - b[1]) <= 1e-8);
            }
        }
    }

    #[test]
    fn single_uav_moves_toward_its_base_station() {
        let s = single_link(12);
        let ctx = ModelContext::new(s.clone());
        let (traj, pc, beams, delta) = surrogate_fixture(&s);
        let ps = uniform_sensing_power(&s, 0.3);
        let tr = TrustRegionState::for_scenario(&s);
        let out = trajectory_step(&ctx, &traj, &pc, &ps, &delta, &beams, &tr).unwrap();
        assert!(out.objective_after > out.objective_before);
        let v = s.bs_positions[0];
        let before = traj.min_distance_to(&[v]);
        let after = out.trajectory.min_distance_to(&[v]);
        assert!(after < before, "{after} vs {before}");
        let viol = violations(&s, &out.trajectory, &pc, &ps, &delta);
        assert!(viol.speed <= 1e-6);
    }

    #[test]
    fn hovering_over_the_base_station_stays_put() {
        let mut s = single_link(5);
        s.uav_start = vec![[0.0, 0.0]];
        s.uav_end = vec![[0.0, 0.0]];
        let ctx = ModelContext::new(s.clone());
        let (traj, pc, beams, delta) = surrogate_fixture(&s);
        let ps = uniform_sensing_power(&s, 0.3);
        let tr = TrustRegionState::for_scenario(&s);
        let out = trajectory_step(&ctx, &traj, &pc, &ps, &delta, &beams, &tr).unwrap();
        for n in 0..s.num_slots {
            let (a, b) = (out.trajectory.positions[0][n], traj.positions[0][n]);
            assert!((a[0] - b[0]).hypot(a[1] - b[1]) <= 5e-3);
        }
        assert!(out.objective_after >= out.objective_before);
    }

    #[test]
    fn setting_one_improves() {
        let s = Scenario::setting1()
            .with_num_slots(10)
            .with_mi_threshold(0.0);
        let ctx = ModelContext::new(s.clone());
        let (traj, pc, beams, delta) = surrogate_fixture(&s);
        let ps = uniform_sensing_power(&s, 0.3);
        let tr = TrustRegionState::for_scenario(&s);
        let out = trajectory_step(&ctx, &traj, &pc, &ps, &delta, &beams, &tr).unwrap();
        assert!(out.objective_after > out.objective_before);
        let viol = violations(&s, &out.trajectory, &pc, &ps, &delta);
        assert!(viol.speed <= 1e-6 && viol.separation <= 1e-6, "{viol:?}");
    }

    #[test]
    fn epigraph_step_does_not_lower_the_surrogate() {
        let s = Scenario::setting1().with_num_slots(8);
        let (traj, pc, beams, delta) = surrogate_fixture(&s);
        let model = GainModel::build(&s, &traj, &beams).unwrap();
        let sur = RateSurrogate {
            scenario: &s,
            model: &model,
            powers: &pc,
            delta: &delta,
        };
        let z_old = z_step(&s, &traj);
        let y = sur.reference(&traj, &z_old);
        let mut moved = traj.clone();
        for k in 0..s.num_uavs {
            for n in 1..s.num_slots - 1 {
                moved.positions[k][n][1] -= 5.0;
            }
        }
        let z_new = z_step(&s, &moved);
        let before = sur.z_value(&moved, &z_old, &z_old, &y);
        let after = sur.z_value(&moved, &z_new, &z_old, &y);
        assert!(z_new.max_residual(&s, &moved) <= 0.0);
        assert!(after >= before - 1e-9 * before.abs(), "{after} < {before}");
    }
}

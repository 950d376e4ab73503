//! Alternating optimization over the four blocks, the benchmark schemes and
//! solution evaluation.

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::comm::{
    all_slot_gains, build_beamformers, slot_utilities, uav_rates, weighted_sum, CommBeamformers,
};
use crate::error::{PlannerError, Result};
use crate::scenario::{validate_scenario, Scenario};
use crate::sensing::{cumulative_mi, mi_slopes, sensing_tables, SlotSensing};
use crate::state::{
    delta_upper_bound, first_separation_violation, uniform_comm_power, uniform_sensing_power,
    violations, CommPower, SensingPower, Trajectory, Violations,
};
use crate::subproblems::{
    comm_power_step, sensing_power_rounds, sensing_power_step, slot_sensing_power, time_division_step,
    trajectory_step,
    z_step, EpigraphState, MiCurve, ModelContext, TimeDivisionInput, TrustRegionState,
};

const GOLDEN_TOL: f64 = 1e-4;
const CURVE_SEGMENTS: usize = 12;
const JOINT_SEGMENTS: usize = 8;

/// Which blocks the AO loop optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    Proposed,
    StaticTrajectory,
    UniformPower,
    UniformTime,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 4] = [
        BenchmarkKind::Proposed,
        BenchmarkKind::StaticTrajectory,
        BenchmarkKind::UniformPower,
        BenchmarkKind::UniformTime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkKind::Proposed => "proposed",
            BenchmarkKind::StaticTrajectory => "static-trajectory",
            BenchmarkKind::UniformPower => "uniform-power",
            BenchmarkKind::UniformTime => "uniform-time",
        }
    }

    fn optimizes_power(self) -> bool {
        self != BenchmarkKind::UniformPower
    }

    fn optimizes_trajectory(self) -> bool {
        self != BenchmarkKind::StaticTrajectory
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkKind {
    type Err = PlannerError;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PlannerError::Parse(format!("unknown benchmark `{s}`")))
    }
}

/// Stopping rule of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriteria {
    pub max_outer: usize,
    /// Stop once the relative objective change falls below this.
    pub rel_tol: f64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self {
            max_outer: 30,
            rel_tol: 1e-3,
        }
    }
}

impl ConvergenceCriteria {
    fn check(&self) -> Result<()> {
        if self.max_outer == 0 || !(self.rel_tol > 0.0) {
            return Err(PlannerError::Parse(format!(
                "convergence criteria must be positive (max_outer {}, tol {})",
                self.max_outer, self.rel_tol
            )));
        }
        Ok(())
    }
}

/// One completed outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mission sum rate [bits/s/Hz].
    pub objective: f64,
    /// Cumulative radar MI [bits].
    pub mi: f64,
    /// Largest constraint violation of the stored iterate.
    pub max_violation: f64,
}

/// Current iterate of every decision variable plus its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoState {
    pub kind: BenchmarkKind,
    pub trajectory: Trajectory,
    pub comm_power: CommPower,
    pub sensing_power: SensingPower,
    pub delta: Vec<f64>,
    pub beams: CommBeamformers,
    pub epigraph: EpigraphState,
    pub objective: f64,
    pub mi: f64,
    pub history: Vec<IterationRecord>,
}

impl AoState {
    pub fn objective_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.objective).collect()
    }

    pub fn mi_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.mi).collect()
    }

    fn refresh_metrics(&mut self, ctx: &ModelContext) -> Result<()> {
        self.objective =
            ctx.objective(&self.trajectory, &self.comm_power, &self.beams, &self.delta)?;
        self.mi = ctx.cumulative_mi(&self.trajectory, &self.sensing_power, &self.delta)?;
        Ok(())
    }
}

/// Straight-line initialization with uniform powers and δ = 0.5.
pub fn initialize_state(s: &Scenario) -> Result<AoState> {
    initial_state(&ModelContext::new(s.clone()), BenchmarkKind::Proposed)
}

fn initial_state(ctx: &ModelContext, kind: BenchmarkKind) -> Result<AoState> {
    let s = &ctx.scenario;
    let trajectory = Trajectory::straight_line(s);
    if let Some((slot, i, j)) = first_separation_violation(s, &trajectory) {
        return Err(PlannerError::InfeasibleScenario { i, j, slot });
    }
    let delta0 = 0.5_f64.clamp(s.delta_min, s.delta_max);
    let sensing_power = match kind {
        BenchmarkKind::UniformPower => uniform_sensing_power(s, 1.0),
        _ => uniform_sensing_power(s, delta0),
    };
    let beams = build_beamformers(s, &trajectory, &ctx.codebook, s.beam_mode)?;
    let mut st = AoState {
        kind,
        epigraph: z_step(s, &trajectory),
        trajectory,
        comm_power: uniform_comm_power(s),
        sensing_power,
        delta: vec![delta0; s.num_slots],
        beams,
        objective: 0.0,
        mi: 0.0,
        history: Vec::new(),
    };
    st.refresh_metrics(ctx)?;
    Ok(st)
}

/// Runs the alternating optimization for one benchmark kind.
pub fn run_ao(
    s: &Scenario,
    criteria: &ConvergenceCriteria,
    kind: BenchmarkKind,
) -> Result<AoState> {
    criteria.check()?;
    let report = validate_scenario(s);
    if !report.is_ok() {
        return Err(PlannerError::Validation(report));
    }
    let ctx = ModelContext::new(s.clone());
    let mut st = initial_state(&ctx, kind)?;
    let tr = TrustRegionState::for_scenario(s);
    info!(
        "{kind}: start objective {:.6}, MI {:.6}",
        st.objective, st.mi
    );

    for it in 1..=criteria.max_outer {
        if kind.optimizes_power() {
            let gains = all_slot_gains(s, &st.trajectory, &st.beams)?;
            st.comm_power = comm_power_step(s, &gains, &st.comm_power)?.0;
            sensing_block(&ctx, &mut st, it == 1)?;
        }
        if kind == BenchmarkKind::UniformTime {
            uniform_time_block(&ctx, &mut st)?;
        } else if !kind.optimizes_power() || !joint_split_block(&ctx, &mut st)? {
            time_division_block(&ctx, &mut st, kind.optimizes_power())?;
        }
        if kind.optimizes_trajectory() {
            trajectory_block(&ctx, &mut st, &tr)?;
        }
        st.refresh_metrics(&ctx)?;
        let viol = violations(
            s,
            &st.trajectory,
            &st.comm_power,
            &st.sensing_power,
            &st.delta,
        );
        let prev = st.history.last().map(|r| r.objective);
        st.history.push(IterationRecord {
            iteration: it,
            objective: st.objective,
            mi: st.mi,
            max_violation: viol.max(),
        });
        debug!(
            "{kind} iteration {it}: objective {:.9}, MI {:.6}, violation {:.2e}",
            st.objective,
            st.mi,
            viol.max()
        );
        if let Some(p) = prev {
            if (st.objective - p).abs() <= criteria.rel_tol * st.objective.abs().max(1e-12) {
                break;
            }
        }
    }
    info!(
        "{kind}: final objective {:.6}, MI {:.6}",
        st.objective, st.mi
    );
    Ok(st)
}

fn sensing_block(ctx: &ModelContext, st: &mut AoState, first: bool) -> Result<()> {
    let s = &ctx.scenario;
    let tables = sensing_tables(s, &st.trajectory, &ctx.codebook, &ctx.combiners)?;
    match sensing_power_step(s, &tables, &st.sensing_power, &st.delta) {
        Ok((ps, _)) => st.sensing_power = ps,
        Err(PlannerError::InfeasibleSensing { detail, .. }) if first => {
            warn!("sensing infeasible at the initial split ({detail}); retrying with δ = δ_max");
            st.delta = vec![s.delta_max; s.num_slots];
            let anchor = uniform_sensing_power(s, s.delta_max);
            st.sensing_power = sensing_power_step(s, &tables, &anchor, &st.delta)?.0;
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn time_division_block(ctx: &ModelContext, st: &mut AoState, rescale: bool) -> Result<()> {
    let s = &ctx.scenario;
    let gains = all_slot_gains(s, &st.trajectory, &st.beams)?;
    let utilities = slot_utilities(s, &gains, &st.comm_power);
    let tables = sensing_tables(s, &st.trajectory, &ctx.codebook, &ctx.combiners)?;
    let slopes = mi_slopes(s, &tables, &st.sensing_power);
    let upper: Vec<f64> = st
        .sensing_power
        .iter()
        .map(|p| delta_upper_bound(s, p))
        .collect();
    let curves = if rescale {
        tables
            .iter()
            .zip(&st.sensing_power)
            .zip(&st.delta)
            .map(|((table, eta), &d)| Some(energy_curve(s, table, eta, d)))
            .collect()
    } else {
        Vec::new()
    };
    let (delta, _) = time_division_step(
        s,
        &TimeDivisionInput {
            utilities: utilities.clone(),
            slopes: slopes.clone(),
            upper,
            curves,
        },
    )?;
    let delta: Vec<f64> = delta
        .iter()
        .map(|d| d.clamp(s.delta_min, s.delta_max))
        .collect();
    let was_short = cumulative_mi(&slopes, &st.delta) < s.mi_threshold;
    if was_short || weighted_sum(&utilities, &delta) >= weighted_sum(&utilities, &st.delta) {
        if rescale {
            for (n, &d) in delta.iter().enumerate() {
                st.sensing_power[n] = scale_sensing(&st.sensing_power[n], st.delta[n] / d);
            }
        }
        st.delta = delta;
    }
    Ok(())
}

/// One achievable (split, MI, powers) point of a slot.
struct Knot {
    delta: f64,
    mi: f64,
    eta: Vec<Vec<f64>>,
}

/// Upper concave hull of knots sorted by δ.
fn concave_hull(knots: Vec<Knot>) -> Vec<Knot> {
    let mut hull: Vec<Knot> = Vec::with_capacity(knots.len());
    for k in knots {
        while hull.len() >= 2 {
            let a = &hull[hull.len() - 2];
            let b = &hull[hull.len() - 1];
            let cross = (b.delta - a.delta) * (k.mi - a.mi) - (b.mi - a.mi) * (k.delta - a.delta);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    hull
}

/// Joint update of δ and the sensing powers. Each slot's MI is tabulated
/// at a geometric grid of splits with the powers re-optimized at every
/// knot; the split program then runs on the hulls of those achieved
/// points. Returns `false` when no improving feasible update was found.
fn joint_split_block(ctx: &ModelContext, st: &mut AoState) -> Result<bool> {
    let s = &ctx.scenario;
    if s.mi_threshold <= 0.0 {
        return Ok(false);
    }
    let gains = all_slot_gains(s, &st.trajectory, &st.beams)?;
    let utilities = slot_utilities(s, &gains, &st.comm_power);
    let tables = sensing_tables(s, &st.trajectory, &ctx.codebook, &ctx.combiners)?;
    let ratio = s.delta_max / s.delta_min;
    let grid: Vec<f64> = (0..=JOINT_SEGMENTS)
        .map(|i| s.delta_min * ratio.powf(i as f64 / JOINT_SEGMENTS as f64))
        .collect();
    let hulls: Vec<Vec<Knot>> = tables
        .par_iter()
        .zip(st.sensing_power.par_iter())
        .zip(st.delta.par_iter())
        .map(|((table, eta), &cur)| {
            let mut knots = vec![Knot {
                delta: cur,
                mi: cur * table.mi_slope(eta, s.noise_bs),
                eta: eta.clone(),
            }];
            for &d in &grid {
                if (d - cur).abs() <= 1e-12 {
                    continue;
                }
                let (e, c, _) = slot_sensing_power(s, table, eta, d, 1)?;
                knots.push(Knot { delta: d, mi: d * c, eta: e });
            }
            knots.sort_by(|a, b| a.delta.total_cmp(&b.delta));
            Ok(concave_hull(knots))
        })
        .collect::<Result<_>>()?;
    let curves = hulls
        .iter()
        .map(|h| {
            Some(MiCurve {
                knots: h.iter().map(|k| [k.delta, k.mi]).collect(),
            })
        })
        .collect();
    let n = s.num_slots;
    let delta = match time_division_step(
        s,
        &TimeDivisionInput {
            utilities: utilities.clone(),
            slopes: vec![0.0; n],
            upper: vec![s.delta_max; n],
            curves,
        },
    ) {
        Ok((d, _)) => d,
        Err(e) if e.is_infeasibility() => return Ok(false),
        Err(e) => return Err(e),
    };
    let mut new_delta = Vec::with_capacity(n);
    let mut new_eta = Vec::with_capacity(n);
    for (i, (&d, hull)) in delta.iter().zip(&hulls).enumerate() {
        let pos = hull.iter().position(|k| k.delta >= d - 1e-9).unwrap_or(hull.len() - 1);
        let upper = &hull[pos];
        if (upper.delta - d).abs() <= 1e-9 || pos == 0 {
            new_delta.push(upper.delta);
            new_eta.push(upper.eta.clone());
            continue;
        }
        let lower = &hull[pos - 1];
        let f = (d - lower.delta) / (upper.delta - lower.delta);
        let target = lower.mi + f * (upper.mi - lower.mi);
        let (e, c, _) = slot_sensing_power(s, &tables[i], &upper.eta, d, 3)?;
        if d * c >= target {
            new_delta.push(d);
            new_eta.push(e);
        } else {
            new_delta.push(upper.delta);
            new_eta.push(upper.eta.clone());
        }
    }
    let slopes: Vec<f64> = tables
        .iter()
        .zip(&new_eta)
        .map(|(t, e)| t.mi_slope(e, s.noise_bs))
        .collect();
    let mi = cumulative_mi(&slopes, &new_delta);
    let old_mi = cumulative_mi(&mi_slopes(s, &tables, &st.sensing_power), &st.delta);
    let gain = weighted_sum(&utilities, &new_delta) - weighted_sum(&utilities, &st.delta);
    let energy_ok = new_eta
        .iter()
        .zip(&new_delta)
        .all(|(e, &d)| delta_upper_bound(s, e) >= d - 1e-12);
    let accept = mi >= s.mi_threshold - 1e-9
        && energy_ok
        && (gain >= 0.0 || old_mi < s.mi_threshold - 1e-9);
    debug!("joint split: gain {gain:.6}, MI {mi:.6}, accepted {accept}");
    if accept {
        st.delta = new_delta;
        st.sensing_power = new_eta;
    }
    Ok(accept)
}

/// Chord model of `δ ↦ δ c(η δ_cur / δ)`, the slot MI when the sensing
/// energy `δ_cur Σ η` is held fixed. The map is concave in δ, so chords
/// between knots bound it from below.
fn energy_curve(s: &Scenario, table: &SlotSensing, eta: &[Vec<f64>], current: f64) -> MiCurve {
    let mut grid: Vec<f64> = (0..=CURVE_SEGMENTS)
        .map(|i| s.delta_min + (s.delta_max - s.delta_min) * i as f64 / CURVE_SEGMENTS as f64)
        .collect();
    grid.push(current.clamp(s.delta_min, s.delta_max));
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let knots = grid
        .into_iter()
        .map(|d| {
            let scaled = scale_sensing(eta, current / d);
            [d, d * table.mi_slope(&scaled, s.noise_bs)]
        })
        .collect();
    MiCurve { knots }
}

fn scale_sensing(eta: &[Vec<f64>], factor: f64) -> Vec<Vec<f64>> {
    eta.iter()
        .map(|e| e.iter().map(|x| x * factor).collect())
        .collect()
}

/// Probes one common split `d`: re-solves the sensing powers for it and
/// returns the mission objective, or `None` when `d` cannot meet the
/// requirement or the energy budget.
fn probe_split(
    s: &Scenario,
    tables: &[SlotSensing],
    anchor: &SensingPower,
    total_utility: f64,
    d: f64,
) -> Result<Option<(f64, SensingPower)>> {
    let delta = vec![d; s.num_slots];
    let ps = if s.mi_threshold > 0.0 {
        match sensing_power_rounds(s, tables, anchor, &delta, 1) {
            Ok((ps, _)) => ps,
            Err(e) if e.is_infeasibility() => return Ok(None),
            Err(e) => return Err(e),
        }
    } else {
        anchor.clone()
    };
    if ps.iter().any(|p| delta_upper_bound(s, p) < d) {
        return Ok(None);
    }
    Ok(Some(((1.0 - d) * total_utility, ps)))
}

/// Golden-section search for the common split of the uniform-time scheme.
fn uniform_time_block(ctx: &ModelContext, st: &mut AoState) -> Result<()> {
    let s = &ctx.scenario;
    let gains = all_slot_gains(s, &st.trajectory, &st.beams)?;
    let total: f64 = slot_utilities(s, &gains, &st.comm_power).iter().sum();
    let tables = sensing_tables(s, &st.trajectory, &ctx.codebook, &ctx.combiners)?;
    let anchor = st.sensing_power.clone();
    let probe = |d: f64| probe_split(s, &tables, &anchor, total, d);

    let mut best: Option<(f64, f64, SensingPower)> = None;
    let mut keep = |d: f64, r: &Option<(f64, SensingPower)>| {
        if let Some((v, ps)) = r {
            if best.as_ref().is_none_or(|b| *v > b.1) {
                best = Some((d, *v, ps.clone()));
            }
        }
    };
    let lo_probe = probe(s.delta_min)?;
    keep(s.delta_min, &lo_probe);
    if lo_probe.is_none() {
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (s.delta_min, st.delta[0].clamp(s.delta_min, s.delta_max));
        let mut x1 = b - ratio * (b - a);
        let mut x2 = a + ratio * (b - a);
        let mut f1 = probe(x1)?;
        let mut f2 = probe(x2)?;
        keep(x1, &f1);
        keep(x2, &f2);
        while b - a > GOLDEN_TOL {
            let left_better = match (&f1, &f2) {
                (Some(p), Some(q)) => p.0 >= q.0,
                (Some(_), None) => true,
                _ => false,
            };
            if left_better {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - ratio * (b - a);
                f1 = probe(x1)?;
                keep(x1, &f1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + ratio * (b - a);
                f2 = probe(x2)?;
                keep(x2, &f2);
            }
        }
        let end = probe(b)?;
        keep(b, &end);
    }
    let current = (1.0 - st.delta[0]) * total;
    let current_ok = cumulative_mi(
        &ctx.mi_slopes(&st.trajectory, &st.sensing_power)?,
        &st.delta,
    ) >= s.mi_threshold - 1e-9;
    match best {
        Some((d, v, ps)) if v >= current || !current_ok => {
            st.delta = vec![d; s.num_slots];
            st.sensing_power = if s.mi_threshold > 0.0 {
                sensing_power_step(s, &tables, &ps, &st.delta)?.0
            } else {
                ps
            };
            Ok(())
        }
        Some(_) => Ok(()),
        None if current_ok => Ok(()),
        None => Err(PlannerError::InfeasibleSensing {
            block: "time-division".into(),
            detail: "no common time split meets the MI requirement".into(),
        }),
    }
}

fn trajectory_block(ctx: &ModelContext, st: &mut AoState, tr: &TrustRegionState) -> Result<()> {
    let s = &ctx.scenario;
    let trace = trajectory_step(
        ctx,
        &st.trajectory,
        &st.comm_power,
        &st.sensing_power,
        &st.delta,
        &st.beams,
        tr,
    )?;
    debug!(
        "trajectory: {:.6} -> {:.6} ({} accepted, {} rejected)",
        trace.objective_before, trace.objective_after, trace.accepted, trace.rejected
    );
    st.trajectory = trace.trajectory;
    let fresh = build_beamformers(s, &st.trajectory, &ctx.codebook, s.beam_mode)?;
    let old = ctx.objective(&st.trajectory, &st.comm_power, &st.beams, &st.delta)?;
    let new = ctx.objective(&st.trajectory, &st.comm_power, &fresh, &st.delta)?;
    if new >= old {
        st.beams = fresh;
    }
    st.epigraph = z_step(s, &st.trajectory);
    Ok(())
}

/// Headline numbers of one benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub kind: BenchmarkKind,
    pub sum_rate: f64,
    pub mi: f64,
    pub iterations: usize,
    pub slot_sum_rate: Vec<f64>,
    pub slot_mi: Vec<f64>,
    pub delta: Vec<f64>,
}

pub fn run_benchmark(
    s: &Scenario,
    kind: BenchmarkKind,
    criteria: &ConvergenceCriteria,
) -> Result<BenchmarkSummary> {
    let st = run_ao(s, criteria, kind)?;
    let m = evaluate_solution(&st, s)?;
    Ok(BenchmarkSummary {
        kind,
        sum_rate: m.objective,
        mi: m.cumulative_mi,
        iterations: st.history.len(),
        slot_sum_rate: m.slot_sum_rate,
        slot_mi: m.slot_mi,
        delta: st.delta,
    })
}

/// Exact-model metrics of a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMetrics {
    /// `(1 − δ[n]) log2(1 + γ_k[n])`, indexed `[n][k]`.
    pub uav_rates: Vec<Vec<f64>>,
    pub slot_sum_rate: Vec<f64>,
    pub objective: f64,
    /// Speeds `[k][n]` between slots `n` and `n + 1` [m/s].
    pub speeds: Vec<Vec<f64>>,
    /// `Σ_k η^c_{m,k}[n]`, indexed `[n][m]`.
    pub comm_power_totals: Vec<Vec<f64>>,
    /// `Σ_b η^s_{m,b}[n]`, indexed `[n][m]`.
    pub sensing_power_totals: Vec<Vec<f64>>,
    pub mi_slopes: Vec<f64>,
    /// `δ[n] c[n]`.
    pub slot_mi: Vec<f64>,
    pub cumulative_mi: f64,
    pub violations: Violations,
}

pub fn evaluate_solution(state: &AoState, s: &Scenario) -> Result<SolutionMetrics> {
    let ctx = ModelContext::new(s.clone());
    let gains = all_slot_gains(s, &state.trajectory, &state.beams)?;
    let uav_rates: Vec<Vec<f64>> = gains
        .iter()
        .zip(&state.comm_power)
        .zip(&state.delta)
        .map(|((g, p), d)| {
            uav_rates(g, p, s.noise_uav)
                .iter()
                .map(|r| (1.0 - d) * r)
                .collect()
        })
        .collect();
    let slot_sum_rate: Vec<f64> = uav_rates.iter().map(|r| r.iter().sum()).collect();
    let objective = slot_sum_rate.iter().sum();
    let tables = sensing_tables(s, &state.trajectory, &ctx.codebook, &ctx.combiners)?;
    let slopes = mi_slopes(s, &tables, &state.sensing_power);
    let slot_mi: Vec<f64> = slopes
        .iter()
        .zip(&state.delta)
        .map(|(c, d)| c * d)
        .collect();
    let totals = |p: &Vec<Vec<Vec<f64>>>| -> Vec<Vec<f64>> {
        p.iter()
            .map(|slot| slot.iter().map(|e| e.iter().sum()).collect())
            .collect()
    };
    Ok(SolutionMetrics {
        uav_rates,
        slot_sum_rate,
        objective,
        speeds: state.trajectory.speeds(s.slot_length()),
        comm_power_totals: totals(&state.comm_power),
        sensing_power_totals: totals(&state.sensing_power),
        cumulative_mi: slot_mi.iter().sum(),
        mi_slopes: slopes,
        slot_mi,
        violations: violations(
            s,
            &state.trajectory,
            &state.comm_power,
            &state.sensing_power,
            &state.delta,
        ),
    })
}

//! Sensing power update: per-slot SCA on the radar MI lower bound under the
//! slot energy budgets.

use rayon::prelude::*;
use std::f64::consts::LN_2;

use super::{merge_reports, nudge_inward, unchanged_report};
use crate::error::{PlannerError, Result};
use crate::scenario::Scenario;
use crate::sensing::{cumulative_mi, SlotSensing};
use crate::solver::{
    find_strictly_feasible, solve_concave_program, AffineConstraint, BarrierOptions,
    ConcaveProgram, LogTerm, SeparableConcave, SolveReport, SparseRow,
};
use crate::state::SensingPower;

/// SCA rounds per slot within one sensing step.
const ROUNDS: usize = 3;

/// `log2(Σ_{j≠m} η_j C_{m,b,j} + σ²)`, the interference term of bin `b` at BS `m`.
pub fn sensing_interference_log(
    table: &SlotSensing,
    eta: &[Vec<f64>],
    m: usize,
    b: usize,
    noise: f64,
) -> f64 {
    (table.signal_interference(eta, m, b).1 + noise).log2()
}

/// First-order upper model of every (BS, bin) interference term in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingSurrogate {
    pub anchor: Vec<Vec<f64>>,
    /// `[m][b]`.
    pub anchor_log: Vec<Vec<f64>>,
    /// `[m][b][j]`, zero for `j = m`.
    pub slopes: Vec<Vec<Vec<f64>>>,
}

impl SensingSurrogate {
    pub fn build(table: &SlotSensing, anchor: &[Vec<f64>], noise: f64) -> Self {
        let m_count = table.num_bs();
        let b_count = table.num_beams();
        let mut anchor_log = vec![vec![0.0; b_count]; m_count];
        let mut slopes = vec![vec![vec![0.0; m_count]; b_count]; m_count];
        for m in 0..m_count {
            for b in 0..b_count {
                let denom = table.signal_interference(anchor, m, b).1 + noise;
                anchor_log[m][b] = denom.log2();
                for j in 0..m_count {
                    if j != m {
                        slopes[m][b][j] = table.coupling[m][b][j] / (denom * LN_2);
                    }
                }
            }
        }
        Self {
            anchor: anchor.to_vec(),
            anchor_log,
            slopes,
        }
    }

    /// Upper bound on the interference term of (`m`, `b`).
    pub fn upper(&self, m: usize, b: usize, eta: &[Vec<f64>]) -> f64 {
        let mut v = self.anchor_log[m][b];
        for (j, s) in self.slopes[m][b].iter().enumerate() {
            v += s * (eta[j][b] - self.anchor[j][b]);
        }
        v
    }

    /// Concave lower bound on `log2(1 + γ_{m,b})`.
    pub fn mi_lower(
        &self,
        table: &SlotSensing,
        eta: &[Vec<f64>],
        m: usize,
        b: usize,
        noise: f64,
    ) -> f64 {
        let (sig, int) = table.signal_interference(eta, m, b);
        (sig + int + noise).log2() - self.upper(m, b, eta)
    }

    /// Lower bound on the slot's MI slope.
    pub fn slope_lower(&self, table: &SlotSensing, eta: &[Vec<f64>], noise: f64) -> f64 {
        let mut total = 0.0;
        for m in 0..table.num_bs() {
            for b in 0..table.num_beams() {
                total += self.mi_lower(table, eta, m, b, noise);
            }
        }
        total
    }
}

/// Maximizes the slot's MI lower bound over powers with `Σ_b η_{m,b} ≤ cap`.
fn solve_slot(
    table: &SlotSensing,
    anchor: &[Vec<f64>],
    cap: f64,
    noise: f64,
) -> Result<(Vec<Vec<f64>>, SolveReport)> {
    let m_count = table.num_bs();
    let b_count = table.num_beams();
    let nv = m_count * b_count;
    // bin-major ordering keeps each log row inside a band of width M
    let var = |j: usize, b: usize| b * m_count + j;
    let sur = SensingSurrogate::build(table, anchor, noise);
    let mut f = SeparableConcave::new(nv);
    for m in 0..m_count {
        for b in 0..b_count {
            let (idx, val): (Vec<usize>, Vec<f64>) = (0..m_count)
                .filter(|&j| table.coupling[m][b][j] > 0.0)
                .map(|j| (var(j, b), table.coupling[m][b][j]))
                .unzip();
            if idx.is_empty() {
                f.constant += noise.log2();
            } else {
                f.logs.push(LogTerm {
                    weight: 1.0 / LN_2,
                    offset: noise,
                    row: SparseRow::new(idx, val),
                });
            }
            f.constant -= sur.anchor_log[m][b];
            for j in 0..m_count {
                let s = sur.slopes[m][b][j];
                f.linear[var(j, b)] -= s;
                f.constant += s * anchor[j][b];
            }
        }
    }
    let mut p = ConcaveProgram::new(nv, &f);
    for v in 0..nv {
        p.affine.push(AffineConstraint::lower(v, 0.0));
    }
    for j in 0..m_count {
        p.affine.push(AffineConstraint::le(
            SparseRow::new(
                (0..b_count).map(|b| var(j, b)).collect(),
                vec![1.0; b_count],
            ),
            cap,
        ));
    }
    let mut x0 = vec![0.0; nv];
    for j in 0..m_count {
        let total: f64 = anchor[j].iter().sum();
        let scale = if total > cap { cap / total } else { 1.0 };
        for b in 0..b_count {
            x0[var(j, b)] = anchor[j][b] * scale;
        }
    }
    nudge_inward(&mut x0, &vec![cap / (2.0 * b_count as f64); nv], 1e-7);
    let opts = BarrierOptions::default();
    let x0 = find_strictly_feasible(&p, &x0, &opts)?;
    let rep = solve_concave_program(&p, &x0, &opts)?;
    let eta = (0..m_count)
        .map(|j| (0..b_count).map(|b| rep.x[var(j, b)].max(0.0)).collect())
        .collect();
    Ok((eta, rep))
}

/// Runs up to `rounds` SCA passes on one slot at split `d`, starting from
/// `anchor` scaled into the budget. Returns the powers, their exact MI slope
/// and the merged solver report.
pub fn slot_sensing_power(
    s: &Scenario,
    table: &SlotSensing,
    anchor: &[Vec<f64>],
    d: f64,
    rounds: usize,
) -> Result<(Vec<Vec<f64>>, f64, SolveReport)> {
    let noise = s.noise_bs;
    let cap = s.p_sense_max / d;
    let mut eta: Vec<Vec<f64>> = anchor
        .iter()
        .map(|e| {
            let total: f64 = e.iter().sum();
            let scale = if total > cap { cap / total } else { 1.0 };
            e.iter().map(|x| x * scale).collect()
        })
        .collect();
    let mut slope = table.mi_slope(&eta, noise);
    let mut reports = Vec::new();
    for _ in 0..rounds {
        let (cand, rep) = solve_slot(table, &eta, cap, noise)?;
        let cand_slope = table.mi_slope(&cand, noise);
        reports.push(rep);
        if cand_slope <= slope {
            break;
        }
        let gain = cand_slope - slope;
        eta = cand;
        slope = cand_slope;
        if gain <= 1e-9 * slope.abs().max(1.0) {
            break;
        }
    }
    let mut rep = if reports.is_empty() { unchanged_report(slope) } else { merge_reports(reports) };
    rep.x = eta.iter().flatten().copied().collect();
    Ok((eta, slope, rep))
}

/// Updates sensing powers slot by slot, raising each slot's exact MI slope
/// within its energy budget `δ[n] Σ_b η_{m,b}[n] ≤ P^s`. Fails with
/// `InfeasibleSensing` when the resulting cumulative MI is still short of
/// the requirement; returns the input unchanged when the requirement is
/// inactive.
pub fn sensing_power_step(
    s: &Scenario,
    tables: &[SlotSensing],
    powers: &[Vec<Vec<f64>>],
    delta: &[f64],
) -> Result<(SensingPower, SolveReport)> {
    sensing_power_rounds(s, tables, powers, delta, ROUNDS)
}

/// [`sensing_power_step`] with at most `rounds` SCA passes per slot.
pub fn sensing_power_rounds(
    s: &Scenario,
    tables: &[SlotSensing],
    powers: &[Vec<Vec<f64>>],
    delta: &[f64],
    rounds: usize,
) -> Result<(SensingPower, SolveReport)> {
    let noise = s.noise_bs;
    if s.mi_threshold <= 0.0 {
        let slopes: Vec<f64> = tables
            .iter()
            .zip(powers)
            .map(|(t, e)| t.mi_slope(e, noise))
            .collect();
        return Ok((
            powers.to_vec(),
            unchanged_report(cumulative_mi(&slopes, delta)),
        ));
    }
    let results: Vec<(Vec<Vec<f64>>, f64, SolveReport)> = tables
        .par_iter()
        .zip(powers.par_iter())
        .zip(delta.par_iter())
        .map(|((table, anchor), &d)| slot_sensing_power(s, table, anchor, d, rounds))
        .collect::<Result<_>>()?;
    let mut eta = Vec::with_capacity(results.len());
    let mut slopes = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for (e, c, r) in results {
        eta.push(e);
        slopes.push(c);
        reports.push(r);
    }
    let mi = cumulative_mi(&slopes, delta);
    if mi < s.mi_threshold - 1e-9 {
        return Err(PlannerError::InfeasibleSensing {
            block: "sensing-power".into(),
            detail: format!(
                "best cumulative MI {mi:.6} bits < required {:.6} bits",
                s.mi_threshold
            ),
        });
    }
    let mut rep = merge_reports(reports);
    rep.objective = mi;
    Ok((eta, rep))
}

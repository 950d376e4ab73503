//! Communication power update: per-slot SCA on the difference-of-logs rate.

use rayon::prelude::*;
use std::f64::consts::LN_2;

use super::{merge_reports, nudge_inward};
use crate::comm::{signal_interference, uav_rates, SlotGains};
use crate::error::Result;
use crate::scenario::Scenario;
use crate::solver::{
    find_strictly_feasible, solve_concave_program, AffineConstraint, BarrierOptions,
    ConcaveProgram, LogTerm, SeparableConcave, SolveReport, SparseRow,
};
use crate::state::CommPower;

/// `log2(I_k + σ²)`, the interference term subtracted in the rate of UAV `k`.
pub fn interference_log(gains: &SlotGains, eta: &[Vec<f64>], k: usize, noise: f64) -> f64 {
    (signal_interference(gains, eta, k).1 + noise).log2()
}

/// First-order upper model of every UAV's interference term in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CommSurrogate {
    pub anchor: Vec<Vec<f64>>,
    /// `log2(I_k + σ²)` at the anchor, per UAV.
    pub anchor_log: Vec<f64>,
    /// Slopes `[k][m][i]` of the interference term in each power, zero for `i = k`.
    pub slopes: Vec<Vec<Vec<f64>>>,
}

impl CommSurrogate {
    pub fn build(gains: &SlotGains, anchor: &[Vec<f64>], noise: f64) -> Self {
        let m_count = gains.len();
        let k_count = gains.first().map_or(0, |g| g.len());
        let mut anchor_log = Vec::with_capacity(k_count);
        let mut slopes = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let denom = signal_interference(gains, anchor, k).1 + noise;
            anchor_log.push(denom.log2());
            slopes.push(
                (0..m_count)
                    .map(|m| {
                        (0..k_count)
                            .map(|i| {
                                if i == k {
                                    0.0
                                } else {
                                    gains[m][k][i] / (denom * LN_2)
                                }
                            })
                            .collect()
                    })
                    .collect(),
            );
        }
        Self {
            anchor: anchor.to_vec(),
            anchor_log,
            slopes,
        }
    }

    /// Upper bound on `log2(I_k + σ²)` at powers `eta`.
    pub fn upper(&self, k: usize, eta: &[Vec<f64>]) -> f64 {
        let mut v = self.anchor_log[k];
        for (m, row) in self.slopes[k].iter().enumerate() {
            for (i, b) in row.iter().enumerate() {
                v += b * (eta[m][i] - self.anchor[m][i]);
            }
        }
        v
    }

    /// Concave lower bound on the spectral efficiency of UAV `k`.
    pub fn rate_lower(&self, gains: &SlotGains, eta: &[Vec<f64>], k: usize, noise: f64) -> f64 {
        let (sig, int) = signal_interference(gains, eta, k);
        (sig + int + noise).log2() - self.upper(k, eta)
    }
}

/// Solves the concave power surrogate of one slot from `anchor`.
fn solve_slot(
    s: &Scenario,
    gains: &SlotGains,
    anchor: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, SolveReport)> {
    let m_count = s.num_bs;
    let k_count = s.num_uavs;
    let nv = m_count * k_count;
    let var = |m: usize, i: usize| m * k_count + i;
    let sur = CommSurrogate::build(gains, anchor, s.noise_uav);
    let mut f = SeparableConcave::new(nv);
    for k in 0..k_count {
        let (idx, val): (Vec<usize>, Vec<f64>) = (0..m_count)
            .flat_map(|m| (0..k_count).map(move |i| (m, i)))
            .filter(|&(m, i)| gains[m][k][i] > 0.0)
            .map(|(m, i)| (var(m, i), gains[m][k][i]))
            .unzip();
        if idx.is_empty() {
            f.constant += s.noise_uav.log2();
        } else {
            f.logs.push(LogTerm {
                weight: 1.0 / LN_2,
                offset: s.noise_uav,
                row: SparseRow::new(idx, val),
            });
        }
        f.constant -= sur.anchor_log[k];
        for m in 0..m_count {
            for i in 0..k_count {
                let b = sur.slopes[k][m][i];
                f.linear[var(m, i)] -= b;
                f.constant += b * anchor[m][i];
            }
        }
    }
    let mut p = ConcaveProgram::new(nv, &f);
    for v in 0..nv {
        p.affine.push(AffineConstraint::lower(v, 0.0));
    }
    for m in 0..m_count {
        p.affine.push(AffineConstraint::le(
            SparseRow::new(
                (0..k_count).map(|i| var(m, i)).collect(),
                vec![1.0; k_count],
            ),
            s.p_comm_max,
        ));
    }
    let mut x0: Vec<f64> = (0..m_count)
        .flat_map(|m| anchor[m].iter().copied())
        .collect();
    let center = vec![s.p_comm_max / (2.0 * k_count as f64); nv];
    nudge_inward(&mut x0, &center, 1e-7);
    let opts = BarrierOptions::default();
    let x0 = find_strictly_feasible(&p, &x0, &opts)?;
    let rep = solve_concave_program(&p, &x0, &opts)?;
    let eta = (0..m_count)
        .map(|m| (0..k_count).map(|i| rep.x[var(m, i)].max(0.0)).collect())
        .collect();
    Ok((eta, rep))
}

/// One SCA pass over all slots. A slot keeps its previous powers unless the
/// exact sum rate does not decrease.
pub fn comm_power_step(
    s: &Scenario,
    gains: &[SlotGains],
    powers: &CommPower,
) -> Result<(CommPower, SolveReport)> {
    let results: Vec<(Vec<Vec<f64>>, SolveReport)> = gains
        .par_iter()
        .zip(powers.par_iter())
        .map(|(g, anchor)| {
            let (eta, rep) = solve_slot(s, g, anchor)?;
            let old: f64 = uav_rates(g, anchor, s.noise_uav).iter().sum();
            let new: f64 = uav_rates(g, &eta, s.noise_uav).iter().sum();
            Ok(if new >= old {
                (eta, rep)
            } else {
                (anchor.clone(), rep)
            })
        })
        .collect::<Result<_>>()?;
    let (eta, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((eta, merge_reports(reports)))
}

//! Time-split update: a linear program in δ.

use crate::error::{PlannerError, Result};
use crate::scenario::Scenario;
use crate::solver::{solve_lp, LinearProgram, LpOptions, SolveReport, SolveStatus};

/// Per-slot data the δ program depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDivisionInput {
    /// Un-weighted communication utilities `Σ_k log2(1 + γ_k[n])`.
    pub utilities: Vec<f64>,
    /// MI slopes `c[n]`.
    pub slopes: Vec<f64>,
    /// Energy-driven upper bounds on δ[n] (already capped at δ_max).
    pub upper: Vec<f64>,
    /// Optional per-slot MI curves replacing `slopes[n]` and `upper[n]`;
    /// empty means none.
    pub curves: Vec<Option<MiCurve>>,
}

/// Concave piecewise-linear lower model of one slot's MI as a function of
/// δ[n], for sensing powers rescaled so that the slot energy stays fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct MiCurve {
    /// Knots `(δ, MI)` with increasing δ.
    pub knots: Vec<[f64; 2]>,
}

impl MiCurve {
    pub fn value(&self, delta: f64) -> f64 {
        let k = &self.knots;
        if delta <= k[0][0] {
            return k[0][1];
        }
        for w in k.windows(2) {
            if delta <= w[1][0] {
                let f = (delta - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + f * (w[1][1] - w[0][1]);
            }
        }
        k[k.len() - 1][1]
    }

    fn is_usable(&self) -> bool {
        !self.knots.is_empty()
            && self.knots.windows(2).all(|w| w[1][0] > w[0][0])
            && self
                .knots
                .iter()
                .all(|k| k[0].is_finite() && k[1].is_finite())
    }
}

/// Maximizes `Σ_n (1 − δ[n]) u[n]` subject to `Σ_n MI_n(δ[n]) ≥ R`, where
/// `MI_n(δ) = δ c[n]` on `δ_min ≤ δ ≤ upper[n]`, or the slot's [`MiCurve`]
/// on its knot range when one is given.
pub fn time_division_step(
    s: &Scenario,
    input: &TimeDivisionInput,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = input.utilities.len();
    let upper: Vec<f64> = input.upper.iter().map(|u| u.min(s.delta_max)).collect();
    let curve = |i: usize| {
        input
            .curves
            .get(i)
            .and_then(|c| c.as_ref())
            .filter(|c| c.is_usable())
    };
    let plain: Vec<usize> = (0..n).filter(|&i| curve(i).is_none()).collect();
    if let Some(&i) = plain.iter().find(|&&i| upper[i] < s.delta_min) {
        return Err(PlannerError::InfeasibleSensing {
            block: "time-division".into(),
            detail: format!("energy budget caps δ[{i}] at {:.6} below δ_min", upper[i]),
        });
    }

    // columns: one per plain slot, then one per curve segment
    let mut cost = Vec::new();
    let mut mi_row = Vec::new();
    let mut lower = Vec::new();
    let mut ub = Vec::new();
    let mut owner = Vec::new();
    let mut base = vec![0.0; n];
    let mut base_mi = 0.0;
    for i in 0..n {
        match curve(i) {
            None => {
                cost.push(-input.utilities[i]);
                mi_row.push(input.slopes[i]);
                lower.push(s.delta_min);
                ub.push(upper[i]);
                owner.push(i);
            }
            Some(c) => {
                base[i] = c.knots[0][0];
                base_mi += c.knots[0][1];
                for w in c.knots.windows(2) {
                    let len = w[1][0] - w[0][0];
                    cost.push(-input.utilities[i]);
                    mi_row.push((w[1][1] - w[0][1]) / len);
                    lower.push(0.0);
                    ub.push(len);
                    owner.push(i);
                }
            }
        }
    }
    let reachable = base_mi + mi_row.iter().zip(&ub).map(|(c, u)| c * u).sum::<f64>();
    if s.mi_threshold > 0.0 && reachable < s.mi_threshold {
        return Err(PlannerError::InfeasibleSensing {
            block: "time-division".into(),
            detail: format!(
                "largest reachable MI {reachable:.6} bits < required {:.6} bits",
                s.mi_threshold
            ),
        });
    }
    let mut lp = LinearProgram::new(cost);
    lp.lower = lower;
    lp.upper = ub;
    if s.mi_threshold > 0.0 {
        lp.add_ge(mi_row, s.mi_threshold - base_mi);
    }
    let mut rep = solve_lp(&lp, &LpOptions::default());
    match rep.status {
        SolveStatus::Optimal => {
            let mut delta = base;
            for (col, &i) in owner.iter().enumerate() {
                delta[i] += rep.x[col];
            }
            rep.objective = input
                .utilities
                .iter()
                .zip(&delta)
                .map(|(u, d)| (1.0 - d) * u)
                .sum();
            Ok((delta, rep))
        }
        SolveStatus::Infeasible => Err(PlannerError::InfeasibleSensing {
            block: "time-division".into(),
            detail: "the time-split program has no feasible point".into(),
        }),
        other => Err(PlannerError::SolverFailure(format!(
            "time-split program ended with {other:?}"
        ))),
    }
}

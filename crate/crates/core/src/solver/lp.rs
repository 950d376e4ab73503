//! Dense two-phase simplex method with Bland's anti-cycling rule.

use serde::{Deserialize, Serialize};

use super::{
    AffineConstraint, ConcaveProgram, SeparableConcave, SolveReport, SolveStatus, SparseRow,
};

/// `maximize objective · x` subject to `rows[i].0 · x ≤ rows[i].1` and
/// `lower ≤ x ≤ upper` (bounds may be infinite).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.rows.push((coeffs, rhs));
    }

    pub fn add_ge(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.rows
            .push((coeffs.into_iter().map(|c| -c).collect(), -rhs));
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v = 0.0f64;
        for (a, b) in &self.rows {
            let lhs: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
            v = v.max(lhs - b);
        }
        for (i, xi) in x.iter().enumerate() {
            v = v.max(self.lower[i] - xi).max(xi - self.upper[i]);
        }
        v
    }

    /// Constraint set as affine rows, bounds included.
    pub fn affine_constraints(&self) -> Vec<AffineConstraint> {
        let mut out: Vec<AffineConstraint> = self
            .rows
            .iter()
            .map(|(a, b)| AffineConstraint::le(SparseRow::from_dense(a), *b))
            .collect();
        for i in 0..self.num_vars() {
            if self.lower[i].is_finite() {
                out.push(AffineConstraint::lower(i, self.lower[i]));
            }
            if self.upper[i].is_finite() {
                out.push(AffineConstraint::upper(i, self.upper[i]));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub max_iterations: usize,
    pub pivot_tol: f64,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            pivot_tol: 1e-9,
        }
    }
}

/// How an original variable maps onto nonnegative standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lower + y
    Shift(usize, f64),
    /// x = upper − y
    Flip(usize, f64),
    /// x = y⁺ − y⁻
    Split(usize, usize),
}

struct Tableau {
    /// (m + 1) × (cols + 1); last row is the objective, last column the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Maximizes the objective row; columns with `allowed[c] == false` never enter.
    fn run(&mut self, allowed: &[bool], opts: &LpOptions, iters: &mut usize) -> SolveStatus {
        let m = self.basis.len();
        loop {
            if *iters >= opts.max_iterations {
                return SolveStatus::IterationLimit;
            }
            let obj = &self.t[m];
            let entering = (0..self.cols).find(|&c| allowed[c] && obj[c] > opts.pivot_tol);
            let Some(c) = entering else {
                return SolveStatus::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let a = self.t[r][c];
                if a > opts.pivot_tol {
                    let ratio = self.t[r][self.cols] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - 1e-12
                                || (ratio <= bratio + 1e-12 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return SolveStatus::Unbounded;
            };
            self.pivot(r, c);
            *iters += 1;
        }
    }
}

/// Solves a linear program by the two-phase simplex method.
pub fn solve_lp(p: &LinearProgram, opts: &LpOptions) -> SolveReport {
    let n = p.num_vars();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    for i in 0..n {
        let (l, u) = (p.lower[i], p.upper[i]);
        let map = if l.is_finite() {
            VarMap::Shift(ncols, l)
        } else if u.is_finite() {
            VarMap::Flip(ncols, u)
        } else {
            ncols += 1;
            VarMap::Split(ncols - 1, ncols)
        };
        ncols += 1;
        maps.push(map);
    }
    // standard-form rows over y: coeffs, rhs
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let expand = |coeffs: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; ncols];
        let mut constant = 0.0;
        for (i, &a) in coeffs.iter().enumerate() {
            match maps[i] {
                VarMap::Shift(c, l) => {
                    out[c] += a;
                    constant += a * l;
                }
                VarMap::Flip(c, u) => {
                    out[c] -= a;
                    constant += a * u;
                }
                VarMap::Split(c1, c2) => {
                    out[c1] += a;
                    out[c2] -= a;
                }
            }
        }
        (out, constant)
    };
    let (cost, _) = expand(&p.objective);
    for (a, b) in &p.rows {
        let (row, constant) = expand(a);
        rows.push((row, b - constant));
    }
    for i in 0..n {
        if let VarMap::Shift(c, l) = maps[i] {
            if p.upper[i].is_finite() {
                let mut row = vec![0.0; ncols];
                row[c] = 1.0;
                rows.push((row, p.upper[i] - l));
            }
        }
    }

    let m = rows.len();
    let num_art = rows.iter().filter(|r| r.1 < 0.0).count();
    let slack0 = ncols;
    let art0 = ncols + m;
    let cols = ncols + m + num_art;
    let mut t = vec![vec![0.0; cols + 1]; m + 1];
    let mut basis = vec![0; m];
    let mut next_art = art0;
    for (r, (row, b)) in rows.iter().enumerate() {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for c in 0..ncols {
            t[r][c] = sign * row[c];
        }
        t[r][slack0 + r] = sign;
        t[r][cols] = sign * b;
        if *b < 0.0 {
            t[r][next_art] = 1.0;
            basis[r] = next_art;
            next_art += 1;
        } else {
            basis[r] = slack0 + r;
        }
    }
    let mut tab = Tableau { t, basis, cols };
    let mut iters = 0;

    let finish = |status: SolveStatus, tab: &Tableau, iters: usize| -> SolveReport {
        let mut y = vec![0.0; cols];
        for (r, &b) in tab.basis.iter().enumerate() {
            y[b] = tab.t[r][cols];
        }
        let x: Vec<f64> = maps
            .iter()
            .map(|m| match *m {
                VarMap::Shift(c, l) => l + y[c],
                VarMap::Flip(c, u) => u - y[c],
                VarMap::Split(a, b) => y[a] - y[b],
            })
            .collect();
        let objective = p.value(&x);
        let kkt_residual = if status == SolveStatus::Optimal {
            let mut f = SeparableConcave::new(n);
            f.linear = p.objective.clone();
            let mut cp = ConcaveProgram::new(n, &f);
            cp.affine = p.affine_constraints();
            super::kkt_residual(&cp, &x)
        } else {
            f64::INFINITY
        };
        SolveReport {
            status,
            x,
            objective,
            kkt_residual,
            iterations: iters,
        }
    };

    if num_art > 0 {
        // phase I: maximize −Σ artificials
        for c in 0..=cols {
            let s: f64 = (0..m)
                .filter(|&r| tab.basis[r] >= art0)
                .map(|r| tab.t[r][c])
                .sum();
            tab.t[m][c] = s;
        }
        for c in art0..cols {
            tab.t[m][c] = 0.0;
        }
        let allowed = vec![true; cols];
        let st = tab.run(&allowed, opts, &mut iters);
        if st == SolveStatus::IterationLimit {
            return finish(st, &tab, iters);
        }
        let infeas: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= art0)
            .map(|r| tab.t[r][cols])
            .sum();
        if infeas > 1e-9 * (1.0 + rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max)) {
            return finish(SolveStatus::Infeasible, &tab, iters);
        }
        // drive degenerate artificials out of the basis
        let mut r = 0;
        while r < tab.basis.len() {
            if tab.basis[r] >= art0 {
                if let Some(c) = (0..art0).find(|&c| tab.t[r][c].abs() > opts.pivot_tol) {
                    tab.pivot(r, c);
                    r += 1;
                } else {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                }
            } else {
                r += 1;
            }
        }
    }
    // phase II objective row: reduced costs c_j − c_B B⁻¹ A_j
    let mrows = tab.basis.len();
    let mut obj = vec![0.0; cols + 1];
    obj[..ncols].copy_from_slice(&cost);
    for r in 0..mrows {
        let cb = if tab.basis[r] < ncols {
            cost[tab.basis[r]]
        } else {
            0.0
        };
        if cb != 0.0 {
            for c in 0..=cols {
                obj[c] -= cb * tab.t[r][c];
            }
        }
    }
    tab.t[mrows] = obj;
    let allowed: Vec<bool> = (0..cols).map(|c| c < art0).collect();
    let st = tab.run(&allowed, opts, &mut iters);
    finish(st, &tab, iters)
}

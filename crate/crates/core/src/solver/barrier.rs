//! Log-barrier method with damped Newton centering.

use super::linalg::{BandedCholesky, DenseCholesky, SymBanded, SymDense};
use super::{
    AffineConstraint, BallConstraint, ConcaveProgram, HessianSink, Objective, SolveReport,
    SolveStatus,
};
use crate::error::{PlannerError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    /// Initial barrier weight on the objective.
    pub t0: f64,
    /// Growth factor of the barrier weight between stages.
    pub mu: f64,
    /// Stop once the duality-gap proxy `m / t` falls below this.
    pub gap_tol: f64,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tol: f64,
    /// Cap on Newton steps over all stages.
    pub max_newton: usize,
    /// Certify the result with nonnegative least-squares multipliers when
    /// the barrier duals look poor.
    pub refine_kkt: bool,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            t0: 1.0,
            mu: 40.0,
            gap_tol: 1e-7,
            newton_tol: 1e-10,
            max_newton: 4000,
            refine_kkt: true,
        }
    }
}

/// How the Newton system is factored.
enum Layout {
    Dense,
    /// Band matrix plus low-rank affine rows (indices into `affine`).
    Banded {
        bw: usize,
        wide: Vec<usize>,
    },
}

fn choose_layout(p: &ConcaveProgram) -> Layout {
    let n = p.num_vars;
    let base = p
        .balls
        .iter()
        .map(BallConstraint::span)
        .chain(std::iter::once(p.objective.bandwidth()))
        .max()
        .unwrap_or(0);
    let limit = base.max(8);
    let mut bw = base;
    let mut wide = Vec::new();
    for (i, c) in p.affine.iter().enumerate() {
        let s = c.row.span();
        if s <= limit {
            bw = bw.max(s);
        } else {
            wide.push(i);
        }
    }
    if 2 * bw >= n || wide.len() * 4 > n {
        Layout::Dense
    } else {
        Layout::Banded { bw, wide }
    }
}

struct Barrier<'a, 'b> {
    p: &'a ConcaveProgram<'b>,
    layout: Layout,
    is_wide: Vec<bool>,
}

impl<'a, 'b> Barrier<'a, 'b> {
    fn new(p: &'a ConcaveProgram<'b>) -> Self {
        let layout = choose_layout(p);
        let mut is_wide = vec![false; p.affine.len()];
        if let Layout::Banded { wide, .. } = &layout {
            for &i in wide {
                is_wide[i] = true;
            }
        }
        Self { p, layout, is_wide }
    }

    /// `t f(x) + Σ ln s_i(x)`, `-inf` outside the strict interior or domain.
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let mut v = 0.0;
        for c in &self.p.affine {
            let s = c.slack(x);
            if s <= 0.0 {
                return f64::NEG_INFINITY;
            }
            v += s.ln();
        }
        for b in &self.p.balls {
            let s = b.slack(x);
            if s <= 0.0 {
                return f64::NEG_INFINITY;
            }
            v += s.ln();
        }
        let f = self.p.objective.value(x);
        if !f.is_finite() {
            return f64::NEG_INFINITY;
        }
        v + t * f
    }

    fn gradient(&self, t: f64, x: &[f64], g: &mut [f64]) {
        self.p.objective.gradient(x, g);
        g.iter_mut().for_each(|gi| *gi *= t);
        for c in &self.p.affine {
            let s = c.slack(x);
            for (&i, a) in c.row.idx.iter().zip(&c.row.val) {
                g[i] -= a / s;
            }
        }
        for b in &self.p.balls {
            let s = b.slack(x);
            for (i, d) in b.gradient(x) {
                g[i] -= d / s;
            }
        }
    }

    fn add_rows(&self, t: f64, x: &[f64], sink: &mut dyn HessianSink, include_wide: bool) {
        struct Scaled<'s> {
            inner: &'s mut dyn HessianSink,
            t: f64,
        }
        impl HessianSink for Scaled<'_> {
            fn add(&mut self, i: usize, j: usize, v: f64) {
                self.inner.add(i, j, self.t * v);
            }
        }
        self.p
            .objective
            .neg_hessian(x, &mut Scaled { inner: sink, t });
        for (ci, c) in self.p.affine.iter().enumerate() {
            if self.is_wide[ci] && !include_wide {
                continue;
            }
            let w = 1.0 / c.slack(x).powi(2);
            rank_one(sink, &c.row.idx, &c.row.val, w);
        }
        for b in &self.p.balls {
            let s = b.slack(x);
            let grad = b.gradient(x);
            let idx: Vec<usize> = grad.iter().map(|e| e.0).collect();
            let val: Vec<f64> = grad.iter().map(|e| e.1).collect();
            rank_one(sink, &idx, &val, 1.0 / (s * s));
            b.add_curvature(sink, 1.0 / s);
        }
    }

    /// Solves `(−∇²φ) dx = g`.
    fn newton_direction(&self, t: f64, x: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let n = self.p.num_vars;
        match &self.layout {
            Layout::Dense => {
                let mut h = SymDense::zeros(n);
                self.add_rows(t, x, &mut h, true);
                let chol = factor_with_ridge(
                    n,
                    |ridge| {
                        let mut d = h.data.clone();
                        for i in 0..n {
                            d[i * n + i] += ridge;
                        }
                        DenseCholesky::factor(n, &d)
                    },
                    max_diag_dense(&h),
                )?;
                let mut dx = g.to_vec();
                chol.solve(&mut dx);
                Some(dx)
            }
            Layout::Banded { bw, wide } => {
                let mut h = SymBanded::zeros(n, *bw);
                self.add_rows(t, x, &mut h, false);
                let w = bw + 1;
                let max_diag = (0..n).map(|i| h.data[i * w]).fold(0.0, f64::max);
                let chol = factor_with_ridge(
                    n,
                    |ridge| {
                        let mut d = h.data.clone();
                        for i in 0..n {
                            d[i * w] += ridge;
                        }
                        BandedCholesky::factor(n, *bw, &d)
                    },
                    max_diag,
                )?;
                if wide.is_empty() {
                    let mut y = g.to_vec();
                    chol.solve(&mut y);
                    return Some(y);
                }
                // Woodbury correction for the wide rows U D Uᵀ, D = diag(1/s²).
                let r = wide.len();
                let mut z = Vec::with_capacity(r);
                for &ci in wide {
                    let c = &self.p.affine[ci];
                    let mut col = vec![0.0; n];
                    for (&i, a) in c.row.idx.iter().zip(&c.row.val) {
                        col[i] += a;
                    }
                    chol.solve(&mut col);
                    z.push(col);
                }
                let slacks: Vec<f64> = wide.iter().map(|&ci| self.p.affine[ci].slack(x)).collect();
                let mut cap = vec![0.0; r * r];
                for (a, &ca) in wide.iter().enumerate() {
                    let row = &self.p.affine[ca].row;
                    for b in 0..=a {
                        cap[a * r + b] = row.dot(&z[b]);
                    }
                    cap[a * r + a] += slacks[a].powi(2);
                }
                let cap_chol = DenseCholesky::factor(r, &cap)?;
                let solve = |rhs: &[f64]| {
                    let mut y = rhs.to_vec();
                    chol.solve(&mut y);
                    let mut uy: Vec<f64> = wide
                        .iter()
                        .map(|&ci| self.p.affine[ci].row.dot(&y))
                        .collect();
                    cap_chol.solve(&mut uy);
                    for (col, coef) in z.iter().zip(&uy) {
                        for (yi, zi) in y.iter_mut().zip(col) {
                            *yi -= coef * zi;
                        }
                    }
                    y
                };
                // the low-rank update is ill-conditioned near the boundary;
                // a couple of refinement sweeps restore full accuracy
                let mut dx = solve(g);
                for _ in 0..2 {
                    let mut res = g.to_vec();
                    for i in 0..n {
                        for j in i.saturating_sub(*bw)..=i {
                            let hij = h.data[i * w + (i - j)];
                            res[i] -= hij * dx[j];
                            if j != i {
                                res[j] -= hij * dx[i];
                            }
                        }
                    }
                    for (&ci, s) in wide.iter().zip(&slacks) {
                        let row = &self.p.affine[ci].row;
                        let coef = row.dot(&dx) / (s * s);
                        for (&i, a) in row.idx.iter().zip(&row.val) {
                            res[i] -= coef * a;
                        }
                    }
                    let corr = solve(&res);
                    for (d, c) in dx.iter_mut().zip(&corr) {
                        *d += c;
                    }
                }
                Some(dx)
            }
        }
    }
}

fn max_diag_dense(h: &SymDense) -> f64 {
    (0..h.n).map(|i| h.data[i * h.n + i]).fold(0.0, f64::max)
}

fn factor_with_ridge<T>(n: usize, mut f: impl FnMut(f64) -> Option<T>, max_diag: f64) -> Option<T> {
    if n == 0 {
        return f(0.0);
    }
    if let Some(c) = f(0.0) {
        return Some(c);
    }
    let scale = max_diag.max(1e-300);
    let mut eps = 1e-14;
    while eps <= 1e-4 {
        if let Some(c) = f(eps * scale) {
            return Some(c);
        }
        eps *= 100.0;
    }
    None
}

fn rank_one(sink: &mut dyn HessianSink, idx: &[usize], val: &[f64], w: f64) {
    for p in 0..idx.len() {
        for q in 0..=p {
            sink.add(idx[p], idx[q], w * val[p] * val[q]);
        }
    }
}

/// Barrier-dual KKT residual: `||∇f − Σ λ ∇c||∞ + Σ λ s` with `λ = 1/(t s)`.
fn barrier_kkt(p: &ConcaveProgram, t: f64, x: &[f64]) -> f64 {
    let mut r = vec![0.0; p.num_vars];
    p.objective.gradient(x, &mut r);
    for c in &p.affine {
        let lam = 1.0 / (t * c.slack(x));
        for (&i, a) in c.row.idx.iter().zip(&c.row.val) {
            r[i] -= lam * a;
        }
    }
    for b in &p.balls {
        let lam = 1.0 / (t * b.slack(x));
        for (i, d) in b.gradient(x) {
            r[i] -= lam * d;
        }
    }
    let stat = r.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    stat + p.num_constraints() as f64 / t
}

/// Maximizes a concave objective from a strictly feasible start.
pub fn solve_concave_program(
    p: &ConcaveProgram,
    x0: &[f64],
    opts: &BarrierOptions,
) -> Result<SolveReport> {
    let n = p.num_vars;
    if x0.len() != n {
        return Err(PlannerError::SolverFailure(format!(
            "start has {} entries, program has {n} variables",
            x0.len()
        )));
    }
    let slack = p.min_slack(x0);
    let f0 = p.objective.value(x0);
    if !(slack > 0.0) || !f0.is_finite() {
        return Err(PlannerError::InfeasibleStart {
            violation: (-slack).max(0.0),
        });
    }
    let bar = Barrier::new(p);
    let m = p.num_constraints() as f64;
    let mut x = x0.to_vec();
    let mut t = opts.t0;
    let mut g = vec![0.0; n];
    let mut iterations = 0;
    let mut status = SolveStatus::Optimal;
    'stages: loop {
        loop {
            if iterations >= opts.max_newton {
                status = SolveStatus::IterationLimit;
                break 'stages;
            }
            bar.gradient(t, &x, &mut g);
            let dx = match bar.newton_direction(t, &x, &g) {
                Some(d) => d,
                None => {
                    return Err(PlannerError::SolverFailure(
                        "Newton system is not positive definite".into(),
                    ))
                }
            };
            iterations += 1;
            let dec: f64 = g.iter().zip(&dx).map(|(a, b)| a * b).sum();
            if !(dec.is_finite()) {
                return Err(PlannerError::SolverFailure(
                    "non-finite Newton decrement".into(),
                ));
            }
            if dec / 2.0 <= opts.newton_tol {
                break;
            }
            let phi = bar.value(t, &x);
            let mut alpha = 1.0;
            let mut trial = vec![0.0; n];
            let mut accepted = false;
            while alpha > 1e-14 {
                for i in 0..n {
                    trial[i] = x[i] + alpha * dx[i];
                }
                let v = bar.value(t, &trial);
                // a backtracked step must make measurable progress
                if v.is_finite() && v >= phi + 0.25 * alpha * dec && (alpha == 1.0 || v > phi) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted || trial == x {
                break;
            }
            std::mem::swap(&mut x, &mut trial);
        }
        if m == 0.0 || m / t <= opts.gap_tol {
            break;
        }
        t *= opts.mu;
    }
    let mut objective = p.objective.value(&x);
    let mut kkt = if m == 0.0 {
        p.objective.gradient(&x, &mut g);
        g.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
    } else {
        let k = barrier_kkt(p, t, &x);
        // barrier duals are noisy near degenerate vertices; fall back to the
        // best nonnegative multipliers when they look poor
        if k > 1e-7 && opts.refine_kkt {
            k.min(super::kkt_residual(p, &x))
        } else {
            k
        }
    };
    if objective < f0 {
        x = x0.to_vec();
        objective = f0;
        kkt = if opts.refine_kkt { super::kkt_residual(p, &x) } else { f64::NAN };
    }
    Ok(SolveReport {
        status,
        x,
        objective,
        kkt_residual: kkt,
        iterations,
    })
}

struct PhaseOne;

impl Objective for PhaseOne {
    fn value(&self, x: &[f64]) -> f64 {
        -x[x.len() - 1]
    }
    fn gradient(&self, _x: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        let last = g.len() - 1;
        g[last] = -1.0;
    }
    fn neg_hessian(&self, _x: &[f64], _sink: &mut dyn HessianSink) {}
    fn bandwidth(&self) -> usize {
        0
    }
}

/// Finds a strictly feasible point by minimizing the largest constraint
/// violation. Returns `x0` unchanged when it is already strictly feasible.
pub fn find_strictly_feasible(
    p: &ConcaveProgram,
    x0: &[f64],
    opts: &BarrierOptions,
) -> Result<Vec<f64>> {
    let slack = p.min_slack(x0);
    if slack > 0.0 {
        return Ok(x0.to_vec());
    }
    let n = p.num_vars;
    let s_idx = n;
    let obj = PhaseOne;
    let mut aux = ConcaveProgram::new(n + 1, &obj);
    for c in &p.affine {
        let mut row = c.row.clone();
        row.idx.push(s_idx);
        row.val.push(-1.0);
        aux.affine.push(AffineConstraint::le(row, c.rhs));
    }
    for b in &p.balls {
        let mut lin = b.linear.clone();
        lin.idx.push(s_idx);
        lin.val.push(-1.0);
        aux.balls.push(BallConstraint {
            idx: b.idx.clone(),
            diff: b.diff.clone(),
            center: b.center.clone(),
            radius_sq: b.radius_sq,
            linear: lin,
        });
    }
    aux.affine.push(AffineConstraint::lower(s_idx, -1.0));
    let mut start = x0.to_vec();
    start.push(-slack + 1.0);
    let rep = solve_concave_program(&aux, &start, opts)?;
    let sigma = rep.x[n];
    if sigma > 1e-7 {
        return Err(PlannerError::InfeasibleSubproblem(format!(
            "smallest achievable constraint violation is {sigma:.3e}"
        )));
    }
    let x = rep.x[..n].to_vec();
    if p.min_slack(&x) > 0.0 {
        Ok(pull_toward(p, x0, x))
    } else {
        Err(PlannerError::InfeasibleSubproblem(
            "feasible set has an empty interior".into(),
        ))
    }
}

/// Shortest step from `x0` toward the strictly feasible `x1` that is still
/// strictly feasible and inside the objective's domain.
fn pull_toward(p: &ConcaveProgram, x0: &[f64], x1: Vec<f64>) -> Vec<f64> {
    if !p.objective.value(x0).is_finite() {
        return x1;
    }
    let mut theta = 1e-6;
    while theta < 1.0 {
        let x: Vec<f64> = x0
            .iter()
            .zip(&x1)
            .map(|(a, b)| a + theta * (b - a))
            .collect();
        if p.min_slack(&x) > 0.0 && p.objective.value(&x).is_finite() {
            return x;
        }
        theta *= 4.0;
    }
    x1
}

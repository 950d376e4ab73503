//! Deterministic solvers for the convex programs generated by the SCA steps:
//! a dense simplex method for linear programs and a log-barrier Newton
//! method for smooth concave maximization over affine and ball constraints.

mod barrier;
mod kkt;
mod linalg;
mod lp;

use serde::{Deserialize, Serialize};

pub use barrier::{find_strictly_feasible, solve_concave_program, BarrierOptions};
pub use kkt::kkt_residual;
pub use linalg::{BandedCholesky, DenseCholesky};
pub use lp::{solve_lp, LinearProgram, LpOptions};

/// Outcome class of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Sparse linear form `Σ val[i] * x[idx[i]]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRow {
    pub fn new(idx: Vec<usize>, val: Vec<f64>) -> Self {
        debug_assert_eq!(idx.len(), val.len());
        Self { idx, val }
    }

    pub fn from_dense(coeffs: &[f64]) -> Self {
        let (idx, val) = coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self { idx, val }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, v)| v * x[i]).sum()
    }

    /// `max idx − min idx`, zero for empty rows.
    pub fn span(&self) -> usize {
        match (self.idx.iter().min(), self.idx.iter().max()) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }
}

/// `row · x ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineConstraint {
    pub row: SparseRow,
    pub rhs: f64,
}

impl AffineConstraint {
    pub fn le(row: SparseRow, rhs: f64) -> Self {
        Self { row, rhs }
    }

    /// `row · x ≥ rhs`, stored negated.
    pub fn ge(row: SparseRow, rhs: f64) -> Self {
        Self {
            row: SparseRow::new(row.idx, row.val.iter().map(|v| -v).collect()),
            rhs: -rhs,
        }
    }

    pub fn upper(i: usize, bound: f64) -> Self {
        Self::le(SparseRow::new(vec![i], vec![1.0]), bound)
    }

    pub fn lower(i: usize, bound: f64) -> Self {
        Self::le(SparseRow::new(vec![i], vec![-1.0]), -bound)
    }

    /// Slack `rhs − row · x`, positive when strictly satisfied.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - self.row.dot(x)
    }
}

/// `||x[idx] − x[diff] − center||² + linear · x ≤ radius_sq`; `diff` is
/// either empty (plain ball) or parallel to `idx`, and the linear part is
/// usually empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallConstraint {
    pub idx: Vec<usize>,
    #[serde(default)]
    pub diff: Vec<usize>,
    pub center: Vec<f64>,
    pub radius_sq: f64,
    #[serde(default)]
    pub linear: SparseRow,
}

impl BallConstraint {
    pub fn new(idx: Vec<usize>, center: Vec<f64>, radius_sq: f64) -> Self {
        Self {
            idx,
            diff: Vec::new(),
            center,
            radius_sq,
            linear: SparseRow::default(),
        }
    }

    /// Ball on the difference vector `x[idx] − x[diff]`.
    pub fn difference(idx: Vec<usize>, diff: Vec<usize>, center: Vec<f64>, radius_sq: f64) -> Self {
        debug_assert_eq!(idx.len(), diff.len());
        Self {
            idx,
            diff,
            center,
            radius_sq,
            linear: SparseRow::default(),
        }
    }

    fn residual(&self, x: &[f64], p: usize) -> f64 {
        let base = x[self.idx[p]] - self.center[p];
        match self.diff.get(p) {
            Some(&j) => base - x[j],
            None => base,
        }
    }

    pub fn slack(&self, x: &[f64]) -> f64 {
        let d: f64 = (0..self.idx.len())
            .map(|p| self.residual(x, p).powi(2))
            .sum();
        self.radius_sq - d - self.linear.dot(x)
    }

    /// Gradient of the constraint function (`−∇slack`) as (index, value) pairs.
    pub fn gradient(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut g: Vec<(usize, f64)> =
            Vec::with_capacity(2 * self.idx.len() + self.linear.idx.len());
        let mut push = |i: usize, v: f64| match g.iter_mut().find(|(j, _)| *j == i) {
            Some(e) => e.1 += v,
            None => g.push((i, v)),
        };
        for p in 0..self.idx.len() {
            let r = 2.0 * self.residual(x, p);
            push(self.idx[p], r);
            if let Some(&j) = self.diff.get(p) {
                push(j, -r);
            }
        }
        for (&i, v) in self.linear.idx.iter().zip(&self.linear.val) {
            push(i, *v);
        }
        g
    }

    /// Adds `scale · ∇²(constraint function)` to `sink`.
    pub fn add_curvature(&self, sink: &mut dyn HessianSink, scale: f64) {
        for p in 0..self.idx.len() {
            let i = self.idx[p];
            sink.add(i, i, 2.0 * scale);
            if let Some(&j) = self.diff.get(p) {
                sink.add(j, j, 2.0 * scale);
                sink.add(i, j, -2.0 * scale);
            }
        }
    }

    pub fn span(&self) -> usize {
        let all = self.idx.iter().chain(&self.diff).chain(&self.linear.idx);
        match (all.clone().min(), all.max()) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }
}

/// Receives entries of a symmetric matrix; each unordered pair is added once.
pub trait HessianSink {
    fn add(&mut self, i: usize, j: usize, v: f64);
}

/// A smooth concave objective to be maximized.
pub trait Objective: Sync {
    /// Value, or `-inf` outside the domain.
    fn value(&self, x: &[f64]) -> f64;
    /// Gradient written into `g` (overwritten).
    fn gradient(&self, x: &[f64], g: &mut [f64]);
    /// Adds the entries of the negated Hessian `−∇²f(x)` (positive semidefinite).
    fn neg_hessian(&self, x: &[f64], sink: &mut dyn HessianSink);
    /// Largest `|i − j|` over nonzero Hessian entries.
    fn bandwidth(&self) -> usize;
}

/// `weight · ln(offset + row · x)`, weight ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogTerm {
    pub weight: f64,
    pub offset: f64,
    pub row: SparseRow,
}

/// `−½ weight · (row · x − target)²`, weight ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadTerm {
    pub weight: f64,
    pub target: f64,
    pub row: SparseRow,
}

/// Sum of a linear form, weighted logs of affine forms and concave quadratics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeparableConcave {
    pub constant: f64,
    pub linear: Vec<f64>,
    pub logs: Vec<LogTerm>,
    pub quads: Vec<QuadTerm>,
}

impl SeparableConcave {
    pub fn new(num_vars: usize) -> Self {
        Self {
            constant: 0.0,
            linear: vec![0.0; num_vars],
            logs: Vec::new(),
            quads: Vec::new(),
        }
    }
}

impl Objective for SeparableConcave {
    fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.constant + self.linear.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>();
        for t in &self.logs {
            let arg = t.offset + t.row.dot(x);
            if arg <= 0.0 {
                return f64::NEG_INFINITY;
            }
            v += t.weight * arg.ln();
        }
        for t in &self.quads {
            v -= 0.5 * t.weight * (t.row.dot(x) - t.target).powi(2);
        }
        v
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g.copy_from_slice(&self.linear);
        for t in &self.logs {
            let scale = t.weight / (t.offset + t.row.dot(x));
            for (&i, a) in t.row.idx.iter().zip(&t.row.val) {
                g[i] += scale * a;
            }
        }
        for t in &self.quads {
            let scale = -t.weight * (t.row.dot(x) - t.target);
            for (&i, a) in t.row.idx.iter().zip(&t.row.val) {
                g[i] += scale * a;
            }
        }
    }

    fn neg_hessian(&self, x: &[f64], sink: &mut dyn HessianSink) {
        let rank_one = |sink: &mut dyn HessianSink, row: &SparseRow, w: f64| {
            for (p, (&i, a)) in row.idx.iter().zip(&row.val).enumerate() {
                for (&j, b) in row.idx[..=p].iter().zip(&row.val[..=p]) {
                    sink.add(i, j, w * a * b);
                }
            }
        };
        for t in &self.logs {
            let arg = t.offset + t.row.dot(x);
            rank_one(sink, &t.row, t.weight / (arg * arg));
        }
        for t in &self.quads {
            rank_one(sink, &t.row, t.weight);
        }
    }

    fn bandwidth(&self) -> usize {
        self.logs
            .iter()
            .map(|t| t.row.span())
            .chain(self.quads.iter().map(|t| t.row.span()))
            .max()
            .unwrap_or(0)
    }
}

/// Concave maximization over affine rows and Euclidean balls.
pub struct ConcaveProgram<'a> {
    pub num_vars: usize,
    pub objective: &'a dyn Objective,
    pub affine: Vec<AffineConstraint>,
    pub balls: Vec<BallConstraint>,
}

impl<'a> ConcaveProgram<'a> {
    pub fn new(num_vars: usize, objective: &'a dyn Objective) -> Self {
        Self {
            num_vars,
            objective,
            affine: Vec::new(),
            balls: Vec::new(),
        }
    }

    pub fn num_constraints(&self) -> usize {
        self.affine.len() + self.balls.len()
    }

    /// Smallest slack over all constraints (negative means violated).
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        self.affine
            .iter()
            .map(|c| c.slack(x))
            .chain(self.balls.iter().map(|b| b.slack(x)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest constraint violation, zero when feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (-self.min_slack(x)).max(0.0)
    }
}

//! Small Cholesky kernels for symmetric positive definite systems.

use super::HessianSink;

/// Symmetric matrix in dense lower-triangular storage.
#[derive(Debug, Clone)]
pub(crate) struct SymDense {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymDense {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[cfg(test)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.data[r * self.n + c]
    }
}

impl HessianSink for SymDense {
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.data[r * self.n + c] += v;
    }
}

/// Symmetric band matrix; entry (i, j) with `i ≥ j`, `i − j ≤ bw` lives at
/// `i * (bw + 1) + (i − j)`.
#[derive(Debug, Clone)]
pub(crate) struct SymBanded {
    pub bw: usize,
    pub data: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }
}

impl HessianSink for SymBanded {
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.bw, "entry ({r},{c}) outside band {}", self.bw);
        self.data[r * (self.bw + 1) + (r - c)] += v;
    }
}

/// Dense Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    /// Factors a row-major lower triangle; `None` when not positive definite.
    pub fn factor(n: usize, lower: &[f64]) -> Option<Self> {
        let mut l = lower.to_vec();
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = l[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(Self { n, l })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// Band Cholesky factor with the same storage layout as the input band.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors a symmetric band matrix given as rows of `bw + 1` entries
    /// (diagonal first, then subdiagonals).
    pub fn factor(n: usize, bw: usize, band: &[f64]) -> Option<Self> {
        let w = bw + 1;
        let mut l = band.to_vec();
        let at = |i: usize, j: usize| i * w + (i - j);
        for j in 0..n {
            let k0 = j.saturating_sub(bw);
            let mut d = l[at(j, j)];
            for k in k0..j {
                d -= l[at(j, k)] * l[at(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[at(j, j)] = d;
            let i_end = (j + bw).min(n - 1);
            for i in (j + 1)..=i_end {
                let k0 = i.saturating_sub(bw);
                let mut s = l[at(i, j)];
                for k in k0..j {
                    s -= l[at(i, k)] * l[at(j, k)];
                }
                l[at(i, j)] = s / d;
            }
        }
        Some(Self { n, bw, l })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        let at = |i: usize, j: usize| i * w + (i - j);
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[at(i, k)] * b[k];
            }
            b[i] = s / self.l[at(i, i)];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            let k_end = (i + self.bw).min(self.n - 1);
            for k in (i + 1)..=k_end {
                s -= self.l[at(k, i)] * b[k];
            }
            b[i] = s / self.l[at(i, i)];
        }
    }
}

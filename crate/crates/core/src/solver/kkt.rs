//! First-order optimality measure for concave programs.

use super::ConcaveProgram;

/// KKT residual at `x`: `||∇f − Σ λ_i ∇c_i||∞ + Σ λ_i |s_i|`, where the
/// multipliers `λ ≥ 0` minimize the stationarity error penalized by the
/// complementarity terms `(λ_i s_i)²`. Zero exactly at KKT points.
pub fn kkt_residual(p: &ConcaveProgram, x: &[f64]) -> f64 {
    let mut r = vec![0.0; p.num_vars];
    p.objective.gradient(x, &mut r);
    // constraint gradients as sparse (index, value) lists with slacks
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = p
        .affine
        .iter()
        .map(|c| {
            (
                c.row
                    .idx
                    .iter()
                    .copied()
                    .zip(c.row.val.iter().copied())
                    .collect(),
                c.slack(x).abs(),
            )
        })
        .collect();
    rows.extend(p.balls.iter().map(|b| (b.gradient(x), b.slack(x).abs())));
    let norms: Vec<f64> = rows
        .iter()
        .map(|(v, s)| v.iter().map(|e| e.1 * e.1).sum::<f64>() + s * s)
        .collect();
    let mut lam = vec![0.0; rows.len()];
    for _sweep in 0..5000 {
        let mut biggest = 0.0f64;
        for (i, (v, s)) in rows.iter().enumerate() {
            if norms[i] == 0.0 {
                continue;
            }
            let vr: f64 = v.iter().map(|&(j, a)| a * r[j]).sum();
            let new = (lam[i] + (vr - lam[i] * s * s) / norms[i]).max(0.0);
            let delta = new - lam[i];
            if delta != 0.0 {
                for &(j, a) in v {
                    r[j] -= delta * a;
                }
                lam[i] = new;
                biggest = biggest.max(delta.abs() * norms[i].sqrt());
            }
        }
        if biggest < 1e-15 {
            break;
        }
    }
    let stat = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let comp: f64 = lam.iter().zip(&rows).map(|(l, (_, s))| l * s).sum();
    stat + comp
}

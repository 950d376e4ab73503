//! Shared fixtures, brute-force oracles and criterion checks for the
//! integration tests.

#![allow(dead_code)]

use std::time::Instant;

use isac_planner::comm::{build_beamformers, uav_rates, CommBeamformers, SlotGains};
use isac_planner::geometry::{gain_toward, AffineGain};
use isac_planner::orchestrator::{initialize_state, run_ao, AoState, BenchmarkKind, ConvergenceCriteria};
use isac_planner::sensing::slot_sensing;
use isac_planner::solver::{
    solve_concave_program, solve_lp, AffineConstraint, BarrierOptions, ConcaveProgram, LinearProgram, LogTerm,
    LpOptions, QuadTerm, SeparableConcave, SolveStatus, SparseRow,
};
use isac_planner::state::{CommPower, SensingPower, Trajectory};
use isac_planner::subproblems::{
    interference_log, inv_z_tangent, rate_with_fixed_ranges, sensing_interference_log, time_division_step, z_step,
    CommSurrogate, GainModel, ModelContext, RateSurrogate, SensingSurrogate, TimeDivisionInput,
};
use isac_planner::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Outcome of one acceptance check.
#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Runs `f` and returns its result with the elapsed seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

/// `‖a − b‖∞ / max(‖b‖∞, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(floor, f64::max);
    diff / scale
}

/// Central finite difference of `f` with a per-coordinate step.
pub fn central_diff(x: &[f64], steps: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = steps[i];
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Step that moves `coupling · x` by a `1e−4` fraction of `floor`.
pub fn log_step(floor: f64, coupling: f64) -> f64 {
    if coupling <= 0.0 {
        1e-3
    } else {
        1e-4 * floor / coupling
    }
}

// ---------------------------------------------------------------- scenarios

/// Small random mission on the setting-one array and beam grid:
/// `K ≤ k_max`, `M ≤ m_max`, `4 ≤ N ≤ n_max`. Straight lines stay at least
/// 70 m apart.
pub fn random_scenario(rng: &mut impl Rng, k_max: usize, m_max: usize, n_max: usize) -> Scenario {
    let mut s = Scenario::setting1();
    let k = rng.gen_range(1..=k_max);
    let m = rng.gen_range(1..=m_max);
    let n = rng.gen_range(4..=n_max);
    s.name = format!("random-k{k}-m{m}-n{n}");
    s.num_uavs = k;
    s.num_bs = m;
    s.num_slots = n;
    s.uav_altitudes = (0..k).map(|_| rng.gen_range(60.0..100.0)).collect();
    s.uav_start = (0..k).map(|i| [0.0, 150.0 * i as f64]).collect();
    let length = rng.gen_range(300.0..500.0);
    s.uav_end = (0..k)
        .map(|i| [length, 150.0 * i as f64 + rng.gen_range(-40.0..40.0)])
        .collect();
    s.bs_positions = (0..m)
        .map(|_| [rng.gen_range(0.0..500.0), rng.gen_range(-150.0..450.0)])
        .collect();
    s.mi_threshold = 0.0;
    s
}

/// Random scenario with an MI requirement that is a random fraction of the
/// MI of the uniform straight-line start.
pub fn random_feasible_scenario(rng: &mut impl Rng, k_max: usize, m_max: usize, n_max: usize) -> Scenario {
    let s = random_scenario(rng, k_max, m_max, n_max);
    let mi0 = initialize_state(&s).expect("random start is valid").mi;
    let frac = rng.gen_range(0.2..0.9);
    s.with_mi_threshold(frac * mi0)
}

/// A random operating point of a scenario.
pub struct RandomState {
    pub ctx: ModelContext,
    pub traj: Trajectory,
    pub pc: CommPower,
    pub ps: SensingPower,
    pub delta: Vec<f64>,
    pub beams: CommBeamformers,
}

pub fn random_state(rng: &mut impl Rng, s: Scenario) -> RandomState {
    let ctx = ModelContext::new(s);
    let s = &ctx.scenario;
    let mut traj = Trajectory::straight_line(s);
    for row in traj.positions.iter_mut() {
        let last = row.len() - 1;
        for q in &mut row[1..last] {
            q[0] += rng.gen_range(-15.0..15.0);
            q[1] += rng.gen_range(-15.0..15.0);
        }
    }
    let pc: CommPower = (0..s.num_slots)
        .map(|_| {
            (0..s.num_bs)
                .map(|_| {
                    let w: Vec<f64> = (0..s.num_uavs).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let total: f64 = w.iter().sum();
                    let budget = s.p_comm_max * rng.gen_range(0.2..1.0);
                    w.iter().map(|x| x / total * budget).collect()
                })
                .collect()
        })
        .collect();
    let ps: SensingPower = (0..s.num_slots)
        .map(|_| {
            (0..s.num_bs)
                .map(|_| (0..s.num_beams()).map(|_| rng.gen_range(0.01..1.0)).collect())
                .collect()
        })
        .collect();
    let delta = (0..s.num_slots)
        .map(|_| rng.gen_range(s.delta_min..s.delta_max))
        .collect();
    let beams = build_beamformers(s, &traj, &ctx.codebook, s.beam_mode).expect("nondegenerate");
    RandomState {
        ctx,
        traj,
        pc,
        ps,
        delta,
        beams,
    }
}

fn flat(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

fn unflat(x: &[f64], rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|r| x[r * cols..(r + 1) * cols].to_vec()).collect()
}

fn positions_flat(t: &Trajectory) -> Vec<f64> {
    t.positions.iter().flatten().flat_map(|q| [q[0], q[1]]).collect()
}

fn with_positions(t: &Trajectory, x: &[f64]) -> Trajectory {
    let mut out = t.clone();
    let mut i = 0;
    for row in out.positions.iter_mut() {
        for q in row.iter_mut() {
            *q = [x[i], x[i + 1]];
            i += 2;
        }
    }
    out
}

fn slot_gains_exact(s: &Scenario, traj: &Trajectory, beams: &CommBeamformers, n: usize) -> SlotGains {
    isac_planner::comm::slot_gains(s, traj, beams, n).expect("nondegenerate")
}

// ------------------------------------------------------- surrogate checks

/// Worst tangency gap and worst relative gradient error over every
/// surrogate at one random state.
#[derive(Debug, Clone, Copy, Default)]
pub struct SurrogateErrors {
    pub tangency: f64,
    pub gradient: f64,
    /// Surrogate with the worst gradient error.
    pub worst: &'static str,
}

impl SurrogateErrors {
    fn gap(&mut self, a: f64, b: f64) {
        self.tangency = self.tangency.max((a - b).abs() / b.abs().max(1.0));
    }

    fn grad(&mut self, what: &'static str, e: f64) {
        if e > self.gradient || self.worst.is_empty() {
            self.gradient = self.gradient.max(e);
            self.worst = what;
        }
    }
}

pub fn surrogate_errors(st: &RandomState) -> SurrogateErrors {
    let s = &st.ctx.scenario;
    let mut err = SurrogateErrors::default();
    let (mc, kc, nc) = (s.num_bs, s.num_uavs, s.num_slots);

    for n in 0..nc {
        // communication interference upper model and rate lower bound
        let gains = slot_gains_exact(s, &st.traj, &st.beams, n);
        let anchor = &st.pc[n];
        let sur = CommSurrogate::build(&gains, anchor, s.noise_uav);
        let x0 = flat(anchor);
        for k in 0..kc {
            err.gap(sur.upper(k, anchor), interference_log(&gains, anchor, k, s.noise_uav));
            let exact_rate = uav_rates(&gains, anchor, s.noise_uav)[k];
            err.gap(sur.rate_lower(&gains, anchor, k, s.noise_uav), exact_rate);
            let steps: Vec<f64> = (0..mc)
                .flat_map(|m| (0..kc).map(move |i| (m, i)))
                .map(|(m, i)| log_step(s.noise_uav, gains[m][k][i]))
                .collect();
            let fd = central_diff(&x0, &steps, |x| interference_log(&gains, &unflat(x, mc, kc), k, s.noise_uav));
            err.grad("comm upper", rel_err(&flat(&sur.slopes[k]), &fd, 1e-300));
            let fd_rate = central_diff(&x0, &steps, |x| uav_rates(&gains, &unflat(x, mc, kc), s.noise_uav)[k]);
            let fd_low = central_diff(&x0, &steps, |x| sur.rate_lower(&gains, &unflat(x, mc, kc), k, s.noise_uav));
            err.grad("comm rate", rel_err(&fd_low, &fd_rate, 1e-300));
        }

        // sensing interference upper model and MI lower bound
        let table = slot_sensing(s, &st.traj, &st.ctx.codebook, &st.ctx.combiners, n).expect("nondegenerate");
        let anchor = &st.ps[n];
        let bc = s.num_beams();
        let sur = SensingSurrogate::build(&table, anchor, s.noise_bs);
        err.gap(sur.slope_lower(&table, anchor, s.noise_bs), table.mi_slope(anchor, s.noise_bs));
        for m in 0..mc {
            for b in 0..bc {
                err.gap(sur.upper(m, b, anchor), sensing_interference_log(&table, anchor, m, b, s.noise_bs));
                // only the powers of bin b enter this term
                let xb: Vec<f64> = (0..mc).map(|j| anchor[j][b]).collect();
                let at = |x: &[f64]| {
                    let mut eta = anchor.clone();
                    for j in 0..mc {
                        eta[j][b] = x[j];
                    }
                    eta
                };
                let steps: Vec<f64> = (0..mc).map(|j| log_step(s.noise_bs, table.coupling[m][b][j])).collect();
                let fd = central_diff(&xb, &steps, |x| sensing_interference_log(&table, &at(x), m, b, s.noise_bs));
                err.grad("sensing upper", rel_err(&sur.slopes[m][b], &fd, 1e-300));
            }
        }
        let x0 = flat(anchor);
        let steps: Vec<f64> = (0..mc)
            .flat_map(|j| (0..bc).map(move |b| (j, b)))
            .map(|(j, b)| {
                let c = (0..mc).map(|m| table.coupling[m][b][j]).fold(0.0, f64::max);
                log_step(s.noise_bs, c)
            })
            .collect();
        let fd_true = central_diff(&x0, &steps, |x| table.mi_slope(&unflat(x, mc, bc), s.noise_bs));
        let fd_low = central_diff(&x0, &steps, |x| sur.slope_lower(&table, &unflat(x, mc, bc), s.noise_bs));
        err.grad("sensing mi", rel_err(&fd_low, &fd_true, 1e-300));

        // affine directional gains
        for (m, &v) in s.bs_positions.iter().enumerate() {
            for k in 0..kc {
                let q = st.traj.positions[k][n];
                let h_k = st.traj.altitudes[k];
                for w in &st.beams[n][m] {
                    let g = AffineGain::build(q, h_k, v, &s.array, w).expect("nondegenerate");
                    let exact = gain_toward(q, h_k, v, &s.array, w).unwrap();
                    err.gap(g.eval(q), exact);
                    let fd = central_diff(&q, &[1e-4; 2], |x| gain_toward([x[0], x[1]], h_k, v, &s.array, w).unwrap());
                    err.grad("gain", rel_err(&g.grad, &fd, 1e-9 * s.num_antennas() as f64));
                }
            }
        }
    }

    // 1/z tangent
    let z = z_step(s, &st.traj);
    for zr in z.z.iter().flatten().flatten() {
        err.gap(inv_z_tangent(*zr, *zr), 1.0 / zr);
        let h = 1e-4 * zr;
        let fd = (1.0 / (zr + h) - 1.0 / (zr - h)) / (2.0 * h);
        let slope = inv_z_tangent(zr + 1.0, *zr) - inv_z_tangent(*zr, *zr);
        err.grad("inv z", rel_err(&[slope], &[fd], 0.0));
    }

    // rate surrogates of the position and epigraph steps
    let model = GainModel::build(s, &st.traj, &st.beams).expect("nondegenerate");
    let sur = RateSurrogate {
        scenario: s,
        model: &model,
        powers: &st.pc,
        delta: &st.delta,
    };
    let y = sur.reference(&st.traj, &z);
    let exact = rate_with_fixed_ranges(s, &st.traj, &st.pc, &st.beams, &st.delta, &z).unwrap();
    let true_obj = st.ctx.objective(&st.traj, &st.pc, &st.beams, &st.delta).unwrap();
    err.gap(sur.q_value(&st.traj, &z, &y), exact);
    err.gap(sur.z_value(&st.traj, &z, &z, &y), exact);
    err.gap(exact, true_obj);
    let analytic: Vec<f64> = sur
        .q_gradient(&st.traj, &z, &y)
        .iter()
        .flatten()
        .flat_map(|g| [g[0], g[1]])
        .collect();
    let x0 = positions_flat(&st.traj);
    let fd = central_diff(&x0, &vec![1e-3; x0.len()], |x| {
        rate_with_fixed_ranges(s, &with_positions(&st.traj, x), &st.pc, &st.beams, &st.delta, &z).unwrap()
    });
    err.grad("q rate", rel_err(&analytic, &fd, 1e-9));
    let zf: Vec<f64> = z.z.iter().flatten().flatten().copied().collect();
    let rebuild = |x: &[f64]| {
        let mut out = z.clone();
        let mut i = 0;
        for a in out.z.iter_mut() {
            for b in a.iter_mut() {
                for c in b.iter_mut() {
                    *c = x[i];
                    i += 1;
                }
            }
        }
        out
    };
    let h = 1e-3;
    let hz = vec![h; zf.len()];
    let fd_exact = central_diff(&zf, &hz, |x| {
        rate_with_fixed_ranges(s, &st.traj, &st.pc, &st.beams, &st.delta, &rebuild(x)).unwrap()
    });
    let fd_sur = central_diff(&zf, &hz, |x| sur.z_value(&st.traj, &rebuild(x), &z, &y));
    err.grad("z rate", rel_err(&fd_sur, &fd_exact, 1e-15));
    err
}

/// Largest amount by which a surrogate crosses its exact counterpart in the
/// wrong direction over `count` random perturbations of each kind.
#[derive(Debug, Clone, Copy, Default)]
pub struct BoundViolations {
    pub comm: f64,
    pub sensing: f64,
    pub inv_z: f64,
    pub samples: usize,
}

pub fn bound_violations(rng: &mut impl Rng, count: usize) -> BoundViolations {
    let mut out = BoundViolations::default();
    let mut done = 0;
    while done < count {
        let s = random_scenario(rng, 3, 3, 6);
        let st = random_state(rng, s);
        let s = &st.ctx.scenario;
        let n = rng.gen_range(0..s.num_slots);
        let gains = slot_gains_exact(s, &st.traj, &st.beams, n);
        let table = slot_sensing(s, &st.traj, &st.ctx.codebook, &st.ctx.combiners, n).unwrap();
        let csur = CommSurrogate::build(&gains, &st.pc[n], s.noise_uav);
        let ssur = SensingSurrogate::build(&table, &st.ps[n], s.noise_bs);
        for _ in 0..50.min(count - done) {
            let scale = 10f64.powf(rng.gen_range(-3.0..1.0));
            let eta: Vec<Vec<f64>> = st.pc[n]
                .iter()
                .map(|r| r.iter().map(|&p| (p * (1.0 + scale * rng.gen_range(-1.0..3.0))).max(0.0)).collect())
                .collect();
            for k in 0..s.num_uavs {
                let gap = interference_log(&gains, &eta, k, s.noise_uav) - csur.upper(k, &eta);
                out.comm = out.comm.max(gap);
            }
            let eta: Vec<Vec<f64>> = st.ps[n]
                .iter()
                .map(|r| r.iter().map(|&p| (p * (1.0 + scale * rng.gen_range(-1.0..3.0))).max(0.0)).collect())
                .collect();
            for m in 0..s.num_bs {
                for b in 0..s.num_beams() {
                    let gap = sensing_interference_log(&table, &eta, m, b, s.noise_bs) - ssur.upper(m, b, &eta);
                    out.sensing = out.sensing.max(gap);
                }
            }
            let zr = 10f64.powf(rng.gen_range(-3.0..6.0));
            let z = 10f64.powf(rng.gen_range(-3.0..6.0));
            out.inv_z = out.inv_z.max(inv_z_tangent(z, zr) - 1.0 / z);
            done += 1;
        }
    }
    out.samples = done;
    out
}

// ----------------------------------------------------------------- oracles

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut v = b[r];
        for c in r + 1..n {
            v -= a[r][c] * x[c];
        }
        x[r] = v / a[r][r];
    }
    Some(x)
}

fn combinations(n: usize, k: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, visit);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), visit);
}

/// Best objective over all basic feasible points of a bounded LP, or `None`
/// when no vertex is feasible.
pub fn lp_vertex_enumeration(p: &LinearProgram) -> Option<f64> {
    let n = p.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = p.rows.clone();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        rows.push((e.clone(), p.upper[i]));
        e[i] = -1.0;
        rows.push((e, -p.lower[i]));
    }
    let mut best: Option<f64> = None;
    combinations(rows.len(), n, &mut |idx| {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if p.max_violation(&x) <= 1e-9 {
                let v = p.value(&x);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    });
    best
}

/// Random bounded LP with `n ≤ 6` variables and `m ≤ 8` rows; about one in
/// five is built infeasible.
pub fn random_lp(rng: &mut impl Rng) -> LinearProgram {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=8);
    let mut p = LinearProgram::new((0..n).map(|_| rng.gen_range(-5.0..5.0)).collect());
    for i in 0..n {
        p.lower[i] = rng.gen_range(-5.0..0.0);
        p.upper[i] = rng.gen_range(0.5..5.0);
    }
    let x_in: Vec<f64> = (0..n).map(|i| rng.gen_range(p.lower[i]..p.upper[i])).collect();
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let lhs: f64 = a.iter().zip(&x_in).map(|(ai, xi)| ai * xi).sum();
        p.add_le(a, lhs + rng.gen_range(0.0..2.0));
    }
    if rng.gen_bool(0.2) {
        // demand more than the box allows along a random row
        let a = p.rows[0].0.clone();
        let reach: f64 = a
            .iter()
            .enumerate()
            .map(|(i, ai)| if *ai > 0.0 { ai * p.upper[i] } else { ai * p.lower[i] })
            .sum();
        p.add_ge(a, reach + 1.0);
    }
    p
}

/// Compares `solve_lp` with vertex enumeration; returns the worst objective
/// gap and whether every feasibility verdict agreed.
pub fn lp_oracle(rng: &mut impl Rng, count: usize) -> (f64, bool) {
    let mut worst = 0.0f64;
    let mut verdicts = true;
    for _ in 0..count {
        let p = random_lp(rng);
        let report = solve_lp(&p, &LpOptions::default());
        match (lp_vertex_enumeration(&p), report.status) {
            (Some(best), SolveStatus::Optimal) => {
                worst = worst.max((best - report.objective).abs());
                worst = worst.max(p.max_violation(&report.x));
            }
            (None, SolveStatus::Infeasible) => {}
            _ => verdicts = false,
        }
    }
    (worst, verdicts)
}

/// Random two-variable concave program: weighted logs plus a concave
/// quadratic over a box and one budget row.
pub struct TwoVarProgram {
    pub objective: SeparableConcave,
    pub upper: [f64; 2],
    pub budget: ([f64; 2], f64),
}

impl TwoVarProgram {
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut f = SeparableConcave::new(2);
        for i in 0..2 {
            f.logs.push(LogTerm {
                weight: rng.gen_range(0.5..3.0),
                offset: 1.0,
                row: SparseRow::new(vec![i], vec![rng.gen_range(0.2..4.0)]),
            });
        }
        f.quads.push(QuadTerm {
            weight: rng.gen_range(0.0..0.5),
            target: rng.gen_range(0.0..3.0),
            row: SparseRow::new(vec![0, 1], vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]),
        });
        f.linear = vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        Self {
            objective: f,
            upper: [rng.gen_range(1.0..5.0), rng.gen_range(1.0..5.0)],
            budget: ([rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0)], rng.gen_range(1.0..4.0)),
        }
    }

    pub fn feasible(&self, x: [f64; 2]) -> bool {
        let (a, b) = self.budget;
        x[0] >= 0.0 && x[1] >= 0.0 && x[0] <= self.upper[0] && x[1] <= self.upper[1] && a[0] * x[0] + a[1] * x[1] <= b
    }

    pub fn program(&self) -> ConcaveProgram<'_> {
        let mut p = ConcaveProgram::new(2, &self.objective);
        for i in 0..2 {
            p.affine.push(AffineConstraint::lower(i, 0.0));
            p.affine.push(AffineConstraint::upper(i, self.upper[i]));
        }
        let (a, b) = self.budget;
        p.affine.push(AffineConstraint::le(SparseRow::from_dense(&a), b));
        p
    }

    /// Coarse grid at 1e−2 followed by a 1e−4 grid around the best point.
    pub fn grid_max(&self) -> f64 {
        use isac_planner::solver::Objective as _;
        let f = |x: [f64; 2]| self.objective.value(&x);
        let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
        let scan = |lo: [f64; 2], hi: [f64; 2], step: f64, best: &mut (f64, [f64; 2])| {
            let nx = ((hi[0] - lo[0]) / step).round() as usize;
            let ny = ((hi[1] - lo[1]) / step).round() as usize;
            for i in 0..=nx {
                for j in 0..=ny {
                    let x = [lo[0] + i as f64 * step, lo[1] + j as f64 * step];
                    if self.feasible(x) {
                        let v = f(x);
                        if v > best.0 {
                            *best = (v, x);
                        }
                    }
                }
            }
        };
        scan([0.0, 0.0], self.upper, 1e-2, &mut best);
        let c = best.1;
        let lo = [(c[0] - 0.02).max(0.0), (c[1] - 0.02).max(0.0)];
        let hi = [(c[0] + 0.02).min(self.upper[0]), (c[1] + 0.02).min(self.upper[1])];
        scan(lo, hi, 1e-4, &mut best);
        best.0
    }
}

/// Worst objective shortfall of the barrier solver against the grid.
pub fn concave_oracle(rng: &mut impl Rng, count: usize) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..count {
        let prog = TwoVarProgram::random(rng);
        let p = prog.program();
        let report = solve_concave_program(&p, &[1e-3, 1e-3], &BarrierOptions::default()).expect("interior start");
        let grid = prog.grid_max();
        worst = worst.max(grid - report.objective).max(p.max_violation(&report.x));
    }
    worst
}

/// Largest deviation from the equal split `P/n` of `max Σ ln(1 + x_i)`
/// subject to `Σ x_i ≤ P`.
pub fn water_filling_error(n: usize, budget: f64) -> f64 {
    let mut f = SeparableConcave::new(n);
    for i in 0..n {
        f.logs.push(LogTerm {
            weight: 1.0,
            offset: 1.0,
            row: SparseRow::new(vec![i], vec![1.0]),
        });
    }
    let mut p = ConcaveProgram::new(n, &f);
    for i in 0..n {
        p.affine.push(AffineConstraint::lower(i, 0.0));
    }
    p.affine.push(AffineConstraint::le(SparseRow::from_dense(&vec![1.0; n]), budget));
    let x0 = vec![budget / (4.0 * n as f64); n];
    let report = solve_concave_program(&p, &x0, &BarrierOptions::default()).expect("interior start");
    report
        .x
        .iter()
        .map(|x| (x - budget / n as f64).abs())
        .fold(0.0, f64::max)
}

/// One random instance of the time-split program.
#[derive(Debug, Clone)]
pub struct SplitInstance {
    pub utilities: Vec<f64>,
    pub slopes: Vec<f64>,
    pub upper: Vec<f64>,
    pub requirement: f64,
}

impl SplitInstance {
    pub fn random(rng: &mut impl Rng, n_max: usize) -> Self {
        let n = rng.gen_range(1..=n_max);
        let utilities: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..6.0)).collect();
        let slopes: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..12.0)).collect();
        let upper: Vec<f64> = (0..n)
            .map(|_| (rng.gen_range(0.3..0.95f64) * 1000.0).round() / 1000.0)
            .collect();
        let reach: f64 = slopes.iter().zip(&upper).map(|(c, u)| c * u).sum();
        let floor: f64 = slopes.iter().map(|c| c * 0.05).sum();
        let requirement = rng.gen_range(floor..reach);
        Self {
            utilities,
            slopes,
            upper,
            requirement,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario::setting1()
            .with_num_slots(self.utilities.len())
            .with_mi_threshold(self.requirement)
            .with_delta_bounds(0.05, 0.95)
    }

    pub fn solve(&self) -> (Vec<f64>, f64) {
        let input = TimeDivisionInput {
            utilities: self.utilities.clone(),
            slopes: self.slopes.clone(),
            upper: self.upper.clone(),
            curves: vec![None; self.utilities.len()],
        };
        let (delta, _) = time_division_step(&self.scenario(), &input).expect("feasible instance");
        let obj = delta.iter().zip(&self.utilities).map(|(d, u)| (1.0 - d) * u).sum();
        (delta, obj)
    }

    /// Brute force: every slot but one on the 1e−3 grid, the remaining
    /// slot at the smallest value meeting the requirement; best over the
    /// choice of that slot.
    pub fn grid_max(&self) -> f64 {
        let n = self.utilities.len();
        let lo = 0.05;
        let grid: Vec<Vec<f64>> = self
            .upper
            .iter()
            .map(|&u| {
                let steps = ((u - lo) / 1e-3).round() as usize;
                (0..=steps).map(|i| lo + i as f64 * 1e-3).collect()
            })
            .collect();
        let mut best = f64::NEG_INFINITY;
        for free in 0..n {
            let others: Vec<usize> = (0..n).filter(|&i| i != free).collect();
            let mut idx = vec![0usize; others.len()];
            loop {
                let mut mi = 0.0;
                let mut obj = 0.0;
                for (p, &i) in others.iter().enumerate() {
                    let d = grid[i][idx[p]];
                    mi += self.slopes[i] * d;
                    obj += (1.0 - d) * self.utilities[i];
                }
                let need = ((self.requirement - mi) / self.slopes[free]).max(lo);
                if need <= self.upper[free] + 1e-12 {
                    best = best.max(obj + (1.0 - need) * self.utilities[free]);
                }
                // odometer increment
                let mut p = 0;
                while p < idx.len() {
                    idx[p] += 1;
                    if idx[p] < grid[others[p]].len() {
                        break;
                    }
                    idx[p] = 0;
                    p += 1;
                }
                if p == idx.len() {
                    break;
                }
            }
        }
        best
    }
}

/// Solves the two-slot worked example; returns (δ, objective).
pub fn worked_split_example() -> (Vec<f64>, f64) {
    SplitInstance {
        utilities: vec![3.0, 4.0],
        slopes: vec![10.0, 5.0],
        upper: vec![0.95, 0.95],
        requirement: 6.0,
    }
    .solve()
}

// ---------------------------------------------------------- AO trajectories

/// Checks one AO run: nondecreasing objective, feasible iterates, MI met.
pub fn ao_trace_ok(s: &Scenario, st: &AoState) -> Result<(), String> {
    let hist = st.objective_history();
    for w in hist.windows(2) {
        if w[1] < w[0] - 1e-8 {
            return Err(format!("objective fell from {} to {}", w[0], w[1]));
        }
    }
    for r in &st.history {
        if r.max_violation > 1e-6 {
            return Err(format!("iteration {} violates constraints by {:.3e}", r.iteration, r.max_violation));
        }
        if s.mi_threshold > 0.0 && r.mi < s.mi_threshold - 1e-6 {
            return Err(format!("iteration {} has MI {} < {}", r.iteration, r.mi, s.mi_threshold));
        }
    }
    let m = isac_planner::orchestrator::evaluate_solution(st, s).map_err(|e| e.to_string())?;
    if m.violations.max() > 1e-6 {
        return Err(format!("final state violates constraints: {:?}", m.violations));
    }
    Ok(())
}

/// Runs every benchmark kind on `s`; infeasible kinds yield `None`.
pub fn run_all_kinds(s: &Scenario, criteria: &ConvergenceCriteria) -> Vec<(BenchmarkKind, Option<AoState>)> {
    BenchmarkKind::ALL
        .iter()
        .map(|&k| match run_ao(s, criteria, k) {
            Ok(st) => (k, Some(st)),
            Err(e) if e.is_infeasibility() => (k, None),
            Err(e) => panic!("{k} failed on {}: {e}", s.name),
        })
        .collect()
}

//! Solution export, reload and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{PlannerError, Result};
use crate::orchestrator::{evaluate_solution, run_benchmark, AoState, BenchmarkKind, ConvergenceCriteria};
use crate::scenario::Scenario;

pub const SOLUTION_FILE: &str = "solution.json";
pub const CSV_FILES: [&str; 6] = [
    "trajectory.csv",
    "rates.csv",
    "power.csv",
    "delta.csv",
    "speeds.csv",
    "convergence.csv",
];

/// Which part of the file set to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

/// Formats `x` rounded to 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{}", if x == 0.0 { 0.0 } else { x });
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| PlannerError::io(path, e))
}

fn csv_line(out: &mut String, cells: &[String]) {
    let _ = writeln!(out, "{}", cells.join(","));
}

/// Writes `solution.json` or the six CSV series into `dir`, creating it if
/// needed, and returns the written paths.
pub fn export_results(state: &AoState, s: &Scenario, format: ExportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| PlannerError::io(dir, e))?;
    match format {
        ExportFormat::Json => {
            let path = dir.join(SOLUTION_FILE);
            let text = serde_json::to_string_pretty(state)
                .map_err(|e| PlannerError::Parse(format!("cannot serialize solution: {e}")))?;
            write_file(&path, &text)?;
            Ok(vec![path])
        }
        ExportFormat::Csv => {
            let m = evaluate_solution(state, s)?;
            let mut files = Vec::with_capacity(CSV_FILES.len());
            let mut emit = |name: &str, text: String| -> Result<()> {
                let path = dir.join(name);
                write_file(&path, &text)?;
                files.push(path);
                Ok(())
            };

            let mut t = String::from("k,n,x,y\n");
            for (k, row) in state.trajectory.positions.iter().enumerate() {
                for (n, q) in row.iter().enumerate() {
                    csv_line(&mut t, &[k.to_string(), n.to_string(), fmt_sig(q[0]), fmt_sig(q[1])]);
                }
            }
            emit("trajectory.csv", t)?;

            let mut t = String::from("n");
            for k in 0..s.num_uavs {
                let _ = write!(t, ",rate_{k}");
            }
            t.push_str(",sum\n");
            for (n, rates) in m.uav_rates.iter().enumerate() {
                let mut cells = vec![n.to_string()];
                cells.extend(rates.iter().map(|&r| fmt_sig(r)));
                cells.push(fmt_sig(m.slot_sum_rate[n]));
                csv_line(&mut t, &cells);
            }
            emit("rates.csv", t)?;

            let mut t = String::from("n,m,k,eta_c,sensing_total\n");
            for (n, slot) in state.comm_power.iter().enumerate() {
                for (bs, powers) in slot.iter().enumerate() {
                    for (k, &p) in powers.iter().enumerate() {
                        csv_line(
                            &mut t,
                            &[
                                n.to_string(),
                                bs.to_string(),
                                k.to_string(),
                                fmt_sig(p),
                                fmt_sig(m.sensing_power_totals[n][bs]),
                            ],
                        );
                    }
                }
            }
            emit("power.csv", t)?;

            let mut t = String::from("n,delta\n");
            for (n, &d) in state.delta.iter().enumerate() {
                csv_line(&mut t, &[n.to_string(), fmt_sig(d)]);
            }
            emit("delta.csv", t)?;

            let mut t = String::from("k,n,speed\n");
            for (k, row) in m.speeds.iter().enumerate() {
                for (n, &v) in row.iter().enumerate() {
                    csv_line(&mut t, &[k.to_string(), n.to_string(), fmt_sig(v)]);
                }
            }
            emit("speeds.csv", t)?;

            let mut t = String::from("iter,objective,mi\n");
            for r in &state.history {
                csv_line(&mut t, &[r.iteration.to_string(), fmt_sig(r.objective), fmt_sig(r.mi)]);
            }
            emit("convergence.csv", t)?;
            Ok(files)
        }
    }
}

/// Writes the full file set: `solution.json` plus the CSV series.
pub fn export_all(state: &AoState, s: &Scenario, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = export_results(state, s, ExportFormat::Json, dir)?;
    files.extend(export_results(state, s, ExportFormat::Csv, dir)?);
    Ok(files)
}

pub fn load_solution(path: impl AsRef<Path>) -> Result<AoState> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PlannerError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PlannerError::Parse(format!("{}: {e}", path.display())))
}

/// Scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Per-BS transmit budget; sets both the communication and the sensing
    /// power limits.
    PComm,
    MiThreshold,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::PComm => "p_comm_max",
            SweepParam::MiThreshold => "mi_threshold",
        }
    }

    pub fn apply(self, s: &Scenario, value: f64) -> Scenario {
        match self {
            SweepParam::PComm => s.clone().with_p_comm_max(value).with_p_sense_max(value),
            SweepParam::MiThreshold => s.clone().with_mi_threshold(value),
        }
    }
}

impl FromStr for SweepParam {
    type Err = PlannerError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_comm_max" => Ok(SweepParam::PComm),
            "mi_threshold" => Ok(SweepParam::MiThreshold),
            other => Err(PlannerError::Parse(format!(
                "unknown sweep parameter `{other}` (expected p_comm_max|mi_threshold)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub kinds: Vec<BenchmarkKind>,
}

impl SweepSpec {
    pub fn check(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(PlannerError::Parse("sweep needs at least one value".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(PlannerError::Parse(format!("sweep value {v} is not finite")));
        }
        if self.kinds.is_empty() {
            return Err(PlannerError::Parse("sweep needs at least one benchmark".into()));
        }
        Ok(())
    }
}

/// Outcome of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub kind: BenchmarkKind,
    /// `None` when the point is infeasible.
    pub sum_rate: Option<f64>,
    pub mi: Option<f64>,
    pub note: String,
}

/// Runs every (value, kind) point. Rows are ordered by value, then by the
/// order of `spec.kinds`; points run concurrently on the rayon pool.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec, criteria: &ConvergenceCriteria) -> Result<Vec<SweepRow>> {
    spec.check()?;
    let mut values = spec.values.clone();
    values.sort_by(f64::total_cmp);
    let points: Vec<(f64, BenchmarkKind)> = values
        .iter()
        .flat_map(|&v| spec.kinds.iter().map(move |&k| (v, k)))
        .collect();
    points
        .par_iter()
        .map(|&(value, kind)| {
            let s = spec.param.apply(base, value);
            match run_benchmark(&s, kind, criteria) {
                Ok(b) => Ok(SweepRow {
                    value,
                    kind,
                    sum_rate: Some(b.sum_rate),
                    mi: Some(b.mi),
                    note: String::new(),
                }),
                Err(e) if e.is_infeasibility() => Ok(SweepRow {
                    value,
                    kind,
                    sum_rate: None,
                    mi: None,
                    note: e.to_string(),
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut t = format!("{},benchmark,sum_rate,mi\n", param.as_str());
    for r in rows {
        let rate = r.sum_rate.map_or_else(|| "infeasible".to_string(), fmt_sig);
        let mi = r.mi.map_or_else(String::new, fmt_sig);
        csv_line(&mut t, &[fmt_sig(r.value), r.kind.to_string(), rate, mi]);
    }
    t
}

pub fn write_sweep(dir: &Path, param: SweepParam, rows: &[SweepRow]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| PlannerError::io(dir, e))?;
    let path = dir.join("sweep.csv");
    write_file(&path, &sweep_csv(param, rows))?;
    Ok(path)
}

//! Mission scenario: fleet, base-station layout, array geometry, budgets and
//! the sensing grid.
//!
//! Scenario files are JSON with explicit unit suffixes on every dimensional
//! key (`_m`, `_s`, `_w`, `_deg`, ...). Internally everything is SI with
//! angles in radians.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};

/// Horizontal position in meters.
pub type Point2 = [f64; 2];

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a power level in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Uniform planar array layout shared by every base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub nx: usize,
    pub ny: usize,
    /// Element spacing along x [m].
    pub dx: f64,
    /// Element spacing along y [m].
    pub dy: f64,
    pub wavelength: f64,
}

impl ArrayGeometry {
    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    /// Half-wavelength spaced square array.
    pub fn half_wavelength(n: usize, wavelength: f64) -> Self {
        Self {
            nx: n,
            ny: n,
            dx: wavelength / 2.0,
            dy: wavelength / 2.0,
            wavelength,
        }
    }
}

/// Uniformly quantized angle range (radians).
///
/// With `endpoint` the grid includes both ends (`linspace`), otherwise the
/// upper end is excluded, which is what a full azimuth circle needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub endpoint: bool,
}

impl AngleGrid {
    pub fn value(&self, idx: usize) -> f64 {
        if self.count <= 1 {
            return self.min;
        }
        let span = self.max - self.min;
        let steps = if self.endpoint {
            (self.count - 1) as f64
        } else {
            self.count as f64
        };
        self.min + span * idx as f64 / steps
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

/// How communication beams are derived from the UAV positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BeamMode {
    /// Exact matched filter toward the true direction.
    Exact,
    /// Nearest codebook beam.
    #[default]
    Quantized,
}

impl std::str::FromStr for BeamMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exact" => Ok(BeamMode::Exact),
            "quantized" => Ok(BeamMode::Quantized),
            other => Err(format!(
                "unknown beam mode `{other}` (expected exact|quantized)"
            )),
        }
    }
}

/// Immutable mission description, all quantities in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub num_uavs: usize,
    pub num_bs: usize,
    pub num_slots: usize,
    /// Total mission duration [s].
    pub mission_duration: f64,
    pub uav_altitudes: Vec<f64>,
    pub bs_positions: Vec<Point2>,
    pub uav_start: Vec<Point2>,
    pub uav_end: Vec<Point2>,
    pub v_max: f64,
    pub d_min: f64,
    pub array: ArrayGeometry,
    /// Channel power gain at the 1 m reference distance.
    pub ref_gain: f64,
    /// Receiver noise power at the UAVs [W].
    pub noise_uav: f64,
    /// Receiver noise power at the base stations [W].
    pub noise_bs: f64,
    pub p_comm_max: f64,
    pub p_sense_max: f64,
    /// Required cumulative radar mutual information [bits].
    pub mi_threshold: f64,
    pub zenith_grid: AngleGrid,
    pub azimuth_grid: AngleGrid,
    pub delta_min: f64,
    pub delta_max: f64,
    pub beam_mode: BeamMode,
    /// Standard deviation of the additive error on combiner angle estimates
    /// [rad]; zero means the combiners sit exactly on the bin angles.
    pub combiner_angle_noise: f64,
    pub combiner_seed: u64,
}

impl Scenario {
    /// Slot length τ = T/N [s].
    pub fn slot_length(&self) -> f64 {
        self.mission_duration / self.num_slots as f64
    }

    /// Per-slot sensing energy budget, taken as `p_sense_max · τ`.
    pub fn sensing_energy_budget(&self) -> f64 {
        self.p_sense_max * self.slot_length()
    }

    pub fn num_antennas(&self) -> usize {
        self.array.num_elements()
    }

    pub fn num_beams(&self) -> usize {
        self.zenith_grid.count * self.azimuth_grid.count
    }

    /// Maximum displacement between consecutive slots [m].
    pub fn max_step(&self) -> f64 {
        self.v_max * self.slot_length()
    }

    /// Bundled position setting 1 (K = 3, M = 3, N = 40).
    pub fn setting1() -> Self {
        from_json_str(include_str!("../scenarios/setting1.json"))
            .expect("bundled setting1.json is valid")
    }

    /// Bundled position setting 2 (K = 3, M = 3, N = 40).
    pub fn setting2() -> Self {
        from_json_str(include_str!("../scenarios/setting2.json"))
            .expect("bundled setting2.json is valid")
    }

    /// Same mission discretized into a different number of slots, keeping
    /// the mission duration.
    pub fn with_num_slots(mut self, num_slots: usize) -> Self {
        self.num_slots = num_slots;
        self
    }

    pub fn with_p_comm_max(mut self, watts: f64) -> Self {
        self.p_comm_max = watts;
        self
    }

    pub fn with_p_sense_max(mut self, watts: f64) -> Self {
        self.p_sense_max = watts;
        self
    }

    pub fn with_mi_threshold(mut self, bits: f64) -> Self {
        self.mi_threshold = bits;
        self
    }

    pub fn with_delta_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.delta_min = lo;
        self.delta_max = hi;
        self
    }

    pub fn with_beam_mode(mut self, mode: BeamMode) -> Self {
        self.beam_mode = mode;
        self
    }
}

/// One invariant violation, naming the offending field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_field(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }

    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.field, v.message))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

fn positive(report: &mut ValidationReport, field: &str, value: f64) {
    if !(value.is_finite() && value > 0.0) {
        report.push(field, format!("must be finite and > 0, got {value}"));
    }
}

fn dist(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Checks every scenario invariant and lists all violations.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut r = ValidationReport::default();

    for (field, n) in [
        ("num_uavs", s.num_uavs),
        ("num_bs", s.num_bs),
        ("num_slots", s.num_slots),
        ("zenith_grid", s.zenith_grid.count),
        ("azimuth_grid", s.azimuth_grid.count),
        ("array", s.array.nx.min(s.array.ny)),
    ] {
        if n == 0 {
            r.push(field, "count must be >= 1");
        }
    }
    positive(&mut r, "mission_duration", s.mission_duration);
    positive(&mut r, "v_max", s.v_max);
    positive(&mut r, "d_min", s.d_min);
    positive(&mut r, "ref_gain", s.ref_gain);
    positive(&mut r, "noise_uav", s.noise_uav);
    positive(&mut r, "noise_bs", s.noise_bs);
    positive(&mut r, "p_comm_max", s.p_comm_max);
    positive(&mut r, "p_sense_max", s.p_sense_max);
    positive(&mut r, "array.dx", s.array.dx);
    positive(&mut r, "array.dy", s.array.dy);
    positive(&mut r, "array.wavelength", s.array.wavelength);
    if !(s.mi_threshold.is_finite() && s.mi_threshold >= 0.0) {
        r.push(
            "mi_threshold",
            format!("must be finite and >= 0, got {}", s.mi_threshold),
        );
    }
    if !(s.delta_min > 0.0 && s.delta_min < s.delta_max && s.delta_max < 1.0) {
        r.push(
            "delta_bounds",
            format!(
                "need 0 < delta_min < delta_max < 1, got [{}, {}]",
                s.delta_min, s.delta_max
            ),
        );
    }
    for (field, g) in [
        ("zenith_grid", &s.zenith_grid),
        ("azimuth_grid", &s.azimuth_grid),
    ] {
        if !(g.min.is_finite() && g.max.is_finite() && g.min <= g.max) {
            r.push(field, "range must be finite with min <= max");
        }
    }
    if !(s.combiner_angle_noise.is_finite() && s.combiner_angle_noise >= 0.0) {
        r.push("combiner_angle_noise", "must be finite and >= 0");
    }

    let k = s.num_uavs;
    for (field, len) in [
        ("uav_altitudes", s.uav_altitudes.len()),
        ("uav_start", s.uav_start.len()),
        ("uav_end", s.uav_end.len()),
    ] {
        if len != k {
            r.push(field, format!("expected {k} entries, got {len}"));
        }
    }
    if s.bs_positions.len() != s.num_bs {
        r.push(
            "bs_positions",
            format!(
                "expected {} entries, got {}",
                s.num_bs,
                s.bs_positions.len()
            ),
        );
    }
    if !r.is_ok() {
        return r;
    }
    for (i, h) in s.uav_altitudes.iter().enumerate() {
        if !(h.is_finite() && *h >= 0.0) {
            r.push(
                "uav_altitudes",
                format!("UAV {i} altitude must be finite and >= 0"),
            );
        }
    }
    let all_points = s
        .uav_start
        .iter()
        .chain(&s.uav_end)
        .chain(&s.bs_positions)
        .all(|p| p[0].is_finite() && p[1].is_finite());
    if !all_points {
        r.push("positions", "all positions must be finite");
        return r;
    }

    let tau = s.slot_length();
    if tau > 0.0 {
        let reach = (s.num_slots.saturating_sub(1)) as f64 * s.v_max * tau;
        for i in 0..k {
            let d = dist(s.uav_start[i], s.uav_end[i]);
            if d > reach * (1.0 + 1e-12) {
                r.push(
                    "uav_end",
                    format!("UAV {i} endpoint unreachable: {d:.3} m > {reach:.3} m"),
                );
            }
        }
    }

    let d2 = s.d_min * s.d_min;
    for i in 0..k {
        for j in (i + 1)..k {
            let dh = s.uav_altitudes[j] - s.uav_altitudes[i];
            for (field, pts) in [("uav_start", &s.uav_start), ("uav_end", &s.uav_end)] {
                let sep = dist(pts[i], pts[j]).powi(2) + dh * dh;
                if sep < d2 {
                    r.push(
                        field,
                        format!(
                            "UAVs {i} and {j} closer than d_min: {:.3} m < {:.3} m",
                            sep.sqrt(),
                            s.d_min
                        ),
                    );
                }
            }
        }
    }
    r
}

/// Noise specification in a scenario file, either in watts or dBm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseLevels {
    pub uav: f64,
    pub bs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rad: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArraySpec {
    pub nx: usize,
    pub ny: usize,
    pub dx_m: f64,
    pub dy_m: f64,
    pub wavelength_m: f64,
}

/// On-disk scenario layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    pub num_uavs: usize,
    pub num_bs: usize,
    pub num_slots: usize,
    pub mission_duration_s: f64,
    pub uav_altitudes_m: Vec<f64>,
    pub bs_positions_m: Vec<Point2>,
    pub uav_start_m: Vec<Point2>,
    pub uav_end_m: Vec<Point2>,
    pub v_max_mps: f64,
    pub d_min_m: f64,
    pub array: ArraySpec,
    pub ref_gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_watts: Option<NoiseLevels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dbm: Option<NoiseLevels>,
    pub p_comm_max_w: f64,
    pub p_sense_max_w: f64,
    pub mi_threshold_bits: f64,
    pub zenith_grid: GridSpec,
    pub azimuth_grid: GridSpec,
    pub delta_bounds: [f64; 2],
    #[serde(default)]
    pub beam_mode: BeamMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combiner_angle_noise_deg: Option<f64>,
    #[serde(default)]
    pub combiner_seed: u64,
}

fn grid_from_spec(field: &str, g: &GridSpec, endpoint: bool) -> Result<AngleGrid> {
    let (min, max) = match (g.min_deg, g.max_deg, g.min_rad, g.max_rad) {
        (Some(a), Some(b), None, None) => (a.to_radians(), b.to_radians()),
        (None, None, Some(a), Some(b)) => (a, b),
        _ => {
            return Err(PlannerError::Parse(format!(
                "{field}: give either min_deg/max_deg or min_rad/max_rad"
            )))
        }
    };
    Ok(AngleGrid {
        count: g.count,
        min,
        max,
        endpoint,
    })
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        let (noise_uav, noise_bs) = match (&self.noise_watts, &self.noise_dbm) {
            (Some(w), None) => (w.uav, w.bs),
            (None, Some(d)) => (dbm_to_watts(d.uav), dbm_to_watts(d.bs)),
            _ => {
                return Err(PlannerError::Parse(
                    "exactly one of noise_watts or noise_dbm is required".into(),
                ))
            }
        };
        Ok(Scenario {
            zenith_grid: grid_from_spec("zenith_grid", &self.zenith_grid, true)?,
            azimuth_grid: grid_from_spec("azimuth_grid", &self.azimuth_grid, false)?,
            name: self.name,
            num_uavs: self.num_uavs,
            num_bs: self.num_bs,
            num_slots: self.num_slots,
            mission_duration: self.mission_duration_s,
            uav_altitudes: self.uav_altitudes_m,
            bs_positions: self.bs_positions_m,
            uav_start: self.uav_start_m,
            uav_end: self.uav_end_m,
            v_max: self.v_max_mps,
            d_min: self.d_min_m,
            array: ArrayGeometry {
                nx: self.array.nx,
                ny: self.array.ny,
                dx: self.array.dx_m,
                dy: self.array.dy_m,
                wavelength: self.array.wavelength_m,
            },
            ref_gain: self.ref_gain,
            noise_uav,
            noise_bs,
            p_comm_max: self.p_comm_max_w,
            p_sense_max: self.p_sense_max_w,
            mi_threshold: self.mi_threshold_bits,
            delta_min: self.delta_bounds[0],
            delta_max: self.delta_bounds[1],
            beam_mode: self.beam_mode,
            combiner_angle_noise: self.combiner_angle_noise_deg.unwrap_or(0.0).to_radians(),
            combiner_seed: self.combiner_seed,
        })
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let grid = |g: &AngleGrid| GridSpec {
            count: g.count,
            min_deg: None,
            max_deg: None,
            min_rad: Some(g.min),
            max_rad: Some(g.max),
        };
        ScenarioFile {
            name: s.name.clone(),
            num_uavs: s.num_uavs,
            num_bs: s.num_bs,
            num_slots: s.num_slots,
            mission_duration_s: s.mission_duration,
            uav_altitudes_m: s.uav_altitudes.clone(),
            bs_positions_m: s.bs_positions.clone(),
            uav_start_m: s.uav_start.clone(),
            uav_end_m: s.uav_end.clone(),
            v_max_mps: s.v_max,
            d_min_m: s.d_min,
            array: ArraySpec {
                nx: s.array.nx,
                ny: s.array.ny,
                dx_m: s.array.dx,
                dy_m: s.array.dy,
                wavelength_m: s.array.wavelength,
            },
            ref_gain: s.ref_gain,
            noise_watts: Some(NoiseLevels {
                uav: s.noise_uav,
                bs: s.noise_bs,
            }),
            noise_dbm: None,
            p_comm_max_w: s.p_comm_max,
            p_sense_max_w: s.p_sense_max,
            mi_threshold_bits: s.mi_threshold,
            zenith_grid: grid(&s.zenith_grid),
            azimuth_grid: grid(&s.azimuth_grid),
            delta_bounds: [s.delta_min, s.delta_max],
            beam_mode: s.beam_mode,
            combiner_angle_noise_deg: (s.combiner_angle_noise > 0.0)
                .then(|| s.combiner_angle_noise.to_degrees()),
            combiner_seed: s.combiner_seed,
        }
    }
}

/// Parses and validates a scenario from JSON text.
pub fn from_json_str(text: &str) -> Result<Scenario> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| PlannerError::Parse(e.to_string()))?;
    let scenario = file.into_scenario()?;
    let report = validate_scenario(&scenario);
    if report.is_ok() {
        Ok(scenario)
    } else {
        Err(PlannerError::Validation(report))
    }
}

/// Loads, converts and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PlannerError::io(path, e))?;
    from_json_str(&text)
}

pub fn to_json_string(s: &Scenario) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_scenario(s))
        .expect("scenario serialization cannot fail")
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json_string(s)).map_err(|e| PlannerError::io(path, e))
}

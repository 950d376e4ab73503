//! Python bindings for the ISAC multi-UAV planner.

use std::path::PathBuf;

use isac_planner::orchestrator::{evaluate_solution, run_ao, AoState, BenchmarkKind, ConvergenceCriteria};
use isac_planner::report::{export_all, load_solution};
use isac_planner::scenario::{from_json_str, to_json_string};
use isac_planner::subproblems::{time_division_step, TimeDivisionInput};
use isac_planner::{load_scenario, validate_scenario, PlannerError};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(isac_planner_py, InfeasibleError, PyRuntimeError, "The sensing requirement or geometry cannot be satisfied.");

fn to_py(e: PlannerError) -> PyErr {
    match e {
        e if e.is_infeasibility() => InfeasibleError::new_err(e.to_string()),
        PlannerError::Io { .. } => PyOSError::new_err(e.to_string()),
        PlannerError::Parse(_) | PlannerError::Validation(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Mission description.
#[pyclass(name = "Scenario", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: isac_planner::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Three UAVs, three base stations, 40 slots.
    #[staticmethod]
    fn setting1() -> Self {
        PyScenario { inner: isac_planner::Scenario::setting1() }
    }

    #[staticmethod]
    fn setting2() -> Self {
        PyScenario { inner: isac_planner::Scenario::setting2() }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_scenario(path).map(|inner| PyScenario { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        from_json_str(text).map(|inner| PyScenario { inner }).map_err(to_py)
    }

    fn to_json(&self) -> String {
        to_json_string(&self.inner)
    }

    /// Field names that fail validation, empty when the scenario is valid.
    fn validate(&self) -> Vec<String> {
        validate_scenario(&self.inner)
            .violations
            .into_iter()
            .map(|v| format!("{}: {}", v.field, v.message))
            .collect()
    }

    fn with_num_slots(&self, n: usize) -> Self {
        PyScenario { inner: self.inner.clone().with_num_slots(n) }
    }

    /// Sets both the communication and the sensing power limit [W].
    fn with_power(&self, watts: f64) -> Self {
        PyScenario { inner: self.inner.clone().with_p_comm_max(watts).with_p_sense_max(watts) }
    }

    fn with_mi_threshold(&self, bits: f64) -> Self {
        PyScenario { inner: self.inner.clone().with_mi_threshold(bits) }
    }

    fn with_delta_bounds(&self, lo: f64, hi: f64) -> Self {
        PyScenario { inner: self.inner.clone().with_delta_bounds(lo, hi) }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn num_uavs(&self) -> usize {
        self.inner.num_uavs
    }

    #[getter]
    fn num_bs(&self) -> usize {
        self.inner.num_bs
    }

    #[getter]
    fn num_slots(&self) -> usize {
        self.inner.num_slots
    }

    #[getter]
    fn p_comm_max(&self) -> f64 {
        self.inner.p_comm_max
    }

    #[getter]
    fn p_sense_max(&self) -> f64 {
        self.inner.p_sense_max
    }

    #[getter]
    fn mi_threshold(&self) -> f64 {
        self.inner.mi_threshold
    }

    #[getter]
    fn delta_bounds(&self) -> (f64, f64) {
        (self.inner.delta_min, self.inner.delta_max)
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "Scenario(name={:?}, K={}, M={}, N={}, P={}, R={})",
            s.name, s.num_uavs, s.num_bs, s.num_slots, s.p_comm_max, s.mi_threshold
        )
    }
}

/// Result of an optimization run.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    inner: AoState,
}

#[pymethods]
impl PySolution {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_solution(path).map(|inner| PySolution { inner }).map_err(to_py)
    }

    #[getter]
    fn benchmark(&self) -> &'static str {
        self.inner.kind.as_str()
    }

    /// Mission sum rate [bits/s/Hz].
    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    /// Cumulative radar mutual information [bits].
    #[getter]
    fn mi(&self) -> f64 {
        self.inner.mi
    }

    #[getter]
    fn delta(&self) -> Vec<f64> {
        self.inner.delta.clone()
    }

    /// Horizontal positions indexed `[k][n]` as `(x, y)`.
    #[getter]
    fn trajectory(&self) -> Vec<Vec<(f64, f64)>> {
        self.inner
            .trajectory
            .positions
            .iter()
            .map(|row| row.iter().map(|q| (q[0], q[1])).collect())
            .collect()
    }

    /// Communication powers indexed `[n][m][k]`.
    #[getter]
    fn comm_power(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.comm_power.clone()
    }

    #[getter]
    fn objective_history(&self) -> Vec<f64> {
        self.inner.objective_history()
    }

    #[getter]
    fn mi_history(&self) -> Vec<f64> {
        self.inner.mi_history()
    }

    /// Largest constraint violation of the solution under `scenario`.
    fn max_violation(&self, scenario: &PyScenario) -> PyResult<f64> {
        evaluate_solution(&self.inner, &scenario.inner)
            .map(|m| m.violations.max())
            .map_err(to_py)
    }

    /// Writes `solution.json` and the CSV series; returns the written paths.
    fn export(&self, scenario: &PyScenario, out_dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        export_all(&self.inner, &scenario.inner, &out_dir).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(benchmark={:?}, objective={:.6}, mi={:.6}, iterations={})",
            self.inner.kind.as_str(),
            self.inner.objective,
            self.inner.mi,
            self.inner.history.len()
        )
    }
}

/// Runs alternating optimization for one benchmark scheme.
#[pyfunction]
#[pyo3(signature = (scenario, benchmark = "proposed", max_outer = 30, tol = 1e-3))]
fn optimize(
    py: Python<'_>,
    scenario: &PyScenario,
    benchmark: &str,
    max_outer: usize,
    tol: f64,
) -> PyResult<PySolution> {
    let kind: BenchmarkKind = benchmark.parse().map_err(to_py)?;
    let criteria = ConvergenceCriteria { max_outer, rel_tol: tol };
    let s = scenario.inner.clone();
    py.detach(move || run_ao(&s, &criteria, kind))
        .map(|inner| PySolution { inner })
        .map_err(to_py)
}

/// Names accepted by `optimize(benchmark=...)`.
#[pyfunction]
fn benchmarks() -> Vec<&'static str> {
    BenchmarkKind::ALL.iter().map(|k| k.as_str()).collect()
}

/// Solves the per-slot time-split program for fixed utilities and MI slopes
/// under the scenario's MI requirement and δ box. Returns `(delta, objective)`.
#[pyfunction]
fn time_split(scenario: &PyScenario, utilities: Vec<f64>, slopes: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    if utilities.len() != slopes.len() {
        return Err(PyValueError::new_err("utilities and slopes differ in length"));
    }
    let n = utilities.len();
    let input = TimeDivisionInput {
        utilities,
        slopes,
        upper: vec![scenario.inner.delta_max; n],
        curves: vec![None; n],
    };
    let (delta, _) = time_division_step(&scenario.inner, &input).map_err(to_py)?;
    let objective = delta.iter().zip(&input.utilities).map(|(d, u)| (1.0 - d) * u).sum();
    Ok((delta, objective))
}

#[pyfunction]
fn dbm_to_watts(dbm: f64) -> f64 {
    isac_planner::dbm_to_watts(dbm)
}

#[pymodule]
fn isac_planner_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(benchmarks, m)?)?;
    m.add_function(wrap_pyfunction!(time_split, m)?)?;
    m.add_function(wrap_pyfunction!(dbm_to_watts, m)?)?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    Ok(())
}

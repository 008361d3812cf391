//! Python bindings: scenarios, runs, paths, power models and the QP solver.

use energy_sufficiency::geometry::{smooth_point, spc_update, SmoothParams, Vec2, WaypointPath};
use energy_sufficiency::plot::{render, Panel};
use energy_sufficiency::power::{Disturbance, ParabolicPower, UnicyclePower};
use energy_sufficiency::qp::{solve, Qp3};
use energy_sufficiency::scenario_file::{load_scenario, parse_scenario, scenario_to_string};
use energy_sufficiency::trace::to_jsonl;
use energy_sufficiency::{run, Error, RunOutput, Scenario};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn pts(points: Vec<(f64, f64)>) -> Vec<Vec2> {
    points.into_iter().map(|(x, y)| Vec2::new(x, y)).collect()
}

/// Polyline of waypoints ending at the station.
#[pyclass(name = "Path", module = "energy_suff", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPath {
    inner: WaypointPath,
}

#[pymethods]
impl PyPath {
    #[new]
    fn new(points: Vec<(f64, f64)>) -> PyResult<Self> {
        WaypointPath::new(pts(points)).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn waypoints(&self) -> Vec<(f64, f64)> {
        self.inner.waypoints().iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn total_length(&self) -> f64 {
        self.inner.total_length()
    }

    #[getter]
    fn turn_angles(&self) -> Vec<f64> {
        self.inner.turn_angles().to_vec()
    }

    #[getter]
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints().to_vec()
    }

    /// Smoothed reference point at s in [0, 1].
    #[pyo3(signature = (s, beta = None))]
    fn point(&self, s: f64, beta: Option<f64>) -> PyResult<(f64, f64)> {
        let params = match beta {
            Some(b) => SmoothParams::with_beta(b).map_err(to_py)?,
            None => SmoothParams::default(),
        };
        let p = smooth_point(&self.inner, &params, s);
        Ok((p.x, p.y))
    }

    /// Length-preserving replacement path starting at the current head `x`.
    fn spc_update(&self, x: (f64, f64), kappa: f64) -> PyResult<Self> {
        spc_update(&self.inner, Vec2::new(x.0, x.1), kappa).map(|inner| Self { inner }).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Path({} waypoints, length {:.3} m)", self.inner.len(), self.inner.total_length())
    }
}

/// P(v) = m0 + m1 v + m2 v^2 + payload.
#[pyclass(name = "ParabolicPower", module = "energy_suff", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParabolicPower {
    inner: ParabolicPower,
}

#[pymethods]
impl PyParabolicPower {
    #[new]
    #[pyo3(signature = (m0 = 1.234, m1 = 31.4578, m2 = 27.8126, payload = 0.0))]
    fn new(m0: f64, m1: f64, m2: f64, payload: f64) -> PyResult<Self> {
        let inner = ParabolicPower { m0, m1, m2, payload };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn power(&self, speed: f64) -> PyResult<f64> {
        self.inner.power(speed).map_err(to_py)
    }

    /// (low, high) converged speeds, or None when the disturbance removes both roots.
    #[pyo3(signature = (v_r, delta_p = 0.0))]
    fn converged_speed(&self, v_r: f64, delta_p: f64) -> PyResult<Option<(f64, f64)>> {
        use energy_sufficiency::power::ConvergedSpeed;
        Ok(match self.inner.converged_speed(v_r, Disturbance::new(delta_p)).map_err(to_py)? {
            ConvergedSpeed::Roots { low, high } => Some((low, high)),
            ConvergedSpeed::NoRealRoot => None,
        })
    }

    fn stability_margin(&self, v_r: f64) -> PyResult<f64> {
        self.inner.stability_margin(v_r).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("ParabolicPower(m0={}, m1={}, m2={}, payload={})", p.m0, p.m1, p.m2, p.payload)
    }
}

/// Unicycle power with the default fitted coefficients.
#[pyfunction]
#[pyo3(signature = (v, omega, payload = 0.0))]
fn power_unicycle(v: f64, omega: f64, payload: f64) -> f64 {
    UnicyclePower::default().with_payload(payload).power(v, omega)
}

/// Solves min ||z - z_nom||^2 subject to A z >= b for three rows and three variables.
#[pyfunction]
fn solve_qp(a: [[f64; 3]; 3], b: [f64; 3], z_nom: [f64; 3]) -> PyResult<([f64; 3], [bool; 3])> {
    let sol = solve(&Qp3 { a, b, z_nom }).map_err(to_py)?;
    Ok((sol.z, sol.active))
}

#[pyclass(name = "Scenario", module = "energy_suff", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_scenario(text).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        load_scenario(&path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        scenario_to_string(&self.inner).map_err(to_py)
    }

    #[getter]
    fn budget(&self) -> f64 {
        self.inner.budget
    }

    #[setter]
    fn set_budget(&mut self, v: f64) {
        self.inner.budget = v;
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[setter]
    fn set_dt(&mut self, v: f64) {
        self.inner.dt = v;
    }

    #[getter]
    fn max_time(&self) -> f64 {
        self.inner.max_time
    }

    #[setter]
    fn set_max_time(&mut self, v: f64) {
        self.inner.max_time = v;
    }

    /// Runs the scenario; the GIL is released while the simulation steps.
    #[pyo3(signature = (seed = 0))]
    fn run(&self, py: Python<'_>, seed: u64) -> PyResult<PyRunResult> {
        let sc = self.inner.clone();
        py.detach(move || run(&sc, seed)).map(|inner| PyRunResult { inner }).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(budget={} J, dt={} s, max_time={} s)", self.inner.budget, self.inner.dt, self.inner.max_time)
    }
}

#[pyclass(name = "RunResult", module = "energy_suff", frozen)]
struct PyRunResult {
    inner: RunOutput,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn status<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner.status)
    }

    #[getter]
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner.metrics)
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn final_path(&self) -> PyPath {
        PyPath { inner: self.inner.final_path.clone() }
    }

    fn __len__(&self) -> usize {
        self.inner.trace.len()
    }

    /// Trace records as a list of dicts, optionally keeping every `stride`-th record.
    #[pyo3(signature = (stride = 1))]
    fn trace<'py>(&self, py: Python<'py>, stride: usize) -> PyResult<Bound<'py, PyAny>> {
        let stride = stride.max(1);
        let sub: Vec<_> = self.inner.trace.iter().step_by(stride).collect();
        json_to_py(py, &sub)
    }

    fn trace_jsonl(&self) -> String {
        String::from_utf8(to_jsonl(&self.inner.trace)).expect("JSON is UTF-8")
    }

    /// SVG document for one panel: he, E, s, L or traj.
    fn plot(&self, panel: &str) -> PyResult<String> {
        let panel: Panel = panel.parse().map_err(to_py)?;
        render(&self.inner.trace, panel, Some(&self.inner.final_path)).map_err(to_py)
    }
}

#[pymodule]
fn energy_suff(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPath>()?;
    m.add_class::<PyParabolicPower>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(power_unicycle, m)?)?;
    m.add_function(wrap_pyfunction!(solve_qp, m)?)?;
    m.add("SCHEMA_VERSION", energy_sufficiency::scenario_file::SCHEMA_VERSION)?;
    Ok(())
}

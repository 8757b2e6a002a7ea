//! Python bindings: `import couette3d`.

use std::path::PathBuf;

use couette_core::experiment::{self, ExperimentConfig};
use couette_core::initial::{random_initial_data, Envelope};
use couette_core::linear::{linear_trajectory, LinearMode};
use couette_core::solver::{SimState, Solver, SolverOptions};
use couette_core::spectral::{leray_project, Fft3, GridSpec};
use couette_core::{diagnostics, multipliers, Error};
use num_complex::Complex64 as C64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        3 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Shear-frame spectral state of the perturbation around Couette flow.
#[pyclass(name = "Simulation")]
struct PySimulation {
    state: SimState,
    solver: Solver,
}

#[pymethods]
impl PySimulation {
    /// Random solenoidal data with `||u||_2 = amplitude`, band-limited to
    /// `|k|, |eta|, |l| <= kappa0`.
    #[new]
    #[pyo3(signature = (nx, ny, nz, ly, nu, amplitude, seed=0, kappa0=2.0, nonlinear=true))]
    #[allow(clippy::too_many_arguments)]
    fn new(nx: usize, ny: usize, nz: usize, ly: f64, nu: f64, amplitude: f64, seed: u64, kappa0: f64, nonlinear: bool) -> PyResult<Self> {
        let grid = GridSpec::new(nx, ny, nz, ly).map_err(to_py)?;
        let f = random_initial_data(seed, grid, amplitude, Envelope::Bandlimited { kappa0 }).map_err(to_py)?;
        let solver = Solver::new(grid, SolverOptions { nonlinear, ..Default::default() });
        Ok(Self { state: SimState::new(f, nu, amplitude), solver })
    }

    /// Loads a checkpoint written by `save` or the command-line tool.
    #[staticmethod]
    #[pyo3(signature = (path, nonlinear=true))]
    fn load(path: PathBuf, nonlinear: bool) -> PyResult<Self> {
        let state = experiment::read_checkpoint(&path).map_err(to_py)?;
        let solver = Solver::new(*state.grid(), SolverOptions { nonlinear, ..Default::default() });
        Ok(Self { state, solver })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        experiment::write_checkpoint(&self.state, &path).map_err(to_py)
    }

    #[getter]
    fn time(&self) -> f64 {
        self.state.t()
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.state.nu
    }

    fn step(&mut self, dt: f64) -> PyResult<()> {
        self.state = self.solver.step(&self.state, dt).map_err(to_py)?;
        Ok(())
    }

    fn advance(&mut self, t_end: f64, dt: f64) -> PyResult<()> {
        self.state = self.solver.advance(&self.state, t_end, dt).map_err(to_py)?;
        Ok(())
    }

    /// `E_total`, `E_neq` and the `x`-averaged component energies.
    fn energies<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let e = diagnostics::component_energies(&self.state.uhat);
        let d = PyDict::new_bound(py);
        d.set_item("E_total", e.e_total)?;
        d.set_item("E_neq", e.e_neq)?;
        d.set_item("E0", e.e0.to_vec())?;
        Ok(d)
    }

    fn divergence_residual(&self) -> f64 {
        self.state.uhat.divergence_residual()
    }

    /// The three velocity components on the physical grid (x fastest).
    fn physical(&self) -> PyResult<Vec<Vec<f64>>> {
        let fft = Fft3::new(*self.state.grid());
        let [a, b, c] = fft.inverse_vector(&self.state.uhat).map_err(to_py)?;
        Ok(vec![a, b, c])
    }

    fn __repr__(&self) -> String {
        format!("Simulation({}, t={}, nu={})", self.state.grid().describe(), self.state.t(), self.state.nu)
    }
}

/// `(t, |u1|, |u2|, |u3|, |Q2|, div_residual)` rows of one linear mode.
#[pyfunction]
#[pyo3(signature = (k, eta, l, u, nu, t_end, dt, dt_out))]
#[allow(clippy::too_many_arguments)]
fn linear_mode(k: i64, eta: f64, l: i64, u: [(f64, f64); 3], nu: f64, t_end: f64, dt: f64, dt_out: f64) -> PyResult<Vec<[f64; 6]>> {
    let mut mode = LinearMode { k, eta, l, uhat: u.map(|(re, im)| C64::new(re, im)), nu, t: 0.0 };
    let kv = mode.wavevector();
    if kv.norm2() > 0.0 {
        mode.uhat = leray_project(mode.uhat, &kv);
    }
    let traj = linear_trajectory(&mode, t_end, dt, dt_out).map_err(to_py)?;
    Ok(traj.iter().map(|s| [s.t, s.u1, s.u2, s.u3, s.q2, s.div_residual]).collect())
}

/// Runs an experiment from TOML text; returns `{"summary": ..., "tables": {name: {column: [...]}}}`.
#[pyfunction]
#[pyo3(signature = (toml_text, kind=None))]
fn run_experiment<'py>(py: Python<'py>, toml_text: &str, kind: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = ExperimentConfig::from_toml(toml_text).map_err(to_py)?;
    if let Some(k) = kind {
        cfg.kind = Some(k.parse().map_err(to_py)?);
    }
    let out = py.allow_threads(|| experiment::run(&cfg)).map_err(to_py)?;
    let tables = PyDict::new_bound(py);
    for t in &out.tables {
        let cols = PyDict::new_bound(py);
        for (i, h) in t.header.iter().enumerate() {
            cols.set_item(h, t.rows.iter().map(|r| r[i]).collect::<Vec<f64>>())?;
        }
        tables.set_item(&t.name, cols)?;
    }
    let summary = PyDict::new_bound(py);
    for (k, v) in &out.summary {
        match v {
            serde_json::Value::Number(n) => summary.set_item(k, n.as_f64())?,
            serde_json::Value::String(s) => summary.set_item(k, s)?,
            serde_json::Value::Bool(b) => summary.set_item(k, *b)?,
            serde_json::Value::Null => summary.set_item(k, py.None())?,
            other => summary.set_item(k, other.to_string())?,
        }
    }
    let d = PyDict::new_bound(py);
    d.set_item("summary", summary)?;
    d.set_item("tables", tables)?;
    d.set_item("param_hash", cfg.param_hash())?;
    Ok(d)
}

/// `w(t, eta)` for growth parameter `kappa`.
#[pyfunction]
fn w(t: f64, eta: f64, kappa: f64) -> f64 {
    multipliers::w_full(t, eta, kappa)
}

/// `w_L(t, k, eta, l)` from the closed form.
#[pyfunction]
fn w_l(t: f64, k: i64, eta: f64, l: i64, kappa: f64) -> f64 {
    multipliers::w_l_value(t, k, eta, l, kappa)
}

/// `(p, r2, mu)` of the fit `log(1/w(1,eta)) ~ a eta^p + b log eta + c`.
#[pyfunction]
fn gevrey2_fit(kappa: f64, etas: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let f = multipliers::gevrey2_fit(kappa, &etas).map_err(to_py)?;
    Ok((f.p, f.r2, f.mu))
}

#[pymodule]
fn couette3d(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(linear_mode, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(w, m)?)?;
    m.add_function(wrap_pyfunction!(w_l, m)?)?;
    m.add_function(wrap_pyfunction!(gevrey2_fit, m)?)?;
    Ok(())
}

//! Python bindings. Fields cross the boundary as lists of `[x, y, z]`
//! triples in cell order (x fastest); reports come back as dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde::Serialize;

use spindrift::config::{parse_config_str, SimulationConfig};
use spindrift::drivers::{self, Problem};
use spindrift::grid::{self, VectorField};
use spindrift::{demag, llg, presets, spin, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NotConverged { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    match v {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_bound_py_any(py),
            (None, Some(f)) => f.into_bound_py_any(py),
            _ => Err(PyValueError::new_err("unrepresentable number")),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            Ok(list.into_any())
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            Ok(dict.into_any())
        }
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyGrid(grid::Grid);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (nx, ny, nz, h, origin = [0.0, 0.0, 0.0]))]
    fn new(nx: usize, ny: usize, nz: usize, h: f64, origin: [f64; 3]) -> PyResult<Self> {
        grid::Grid::with_origin(nx, ny, nz, h, origin).map(Self).map_err(py_err)
    }

    /// `n` cells per side over a box of edge `length`.
    #[staticmethod]
    #[pyo3(signature = (n, length = 1.0))]
    fn cube(n: usize, length: f64) -> PyResult<Self> {
        grid::Grid::cube(n, length).map(Self).map_err(py_err)
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.0.dims()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.0.n_cells()
    }

    fn __repr__(&self) -> String {
        format!("Grid({})", self.0.describe())
    }
}

#[pyclass(name = "VectorField", from_py_object)]
#[derive(Clone)]
struct PyField(VectorField);

#[pymethods]
impl PyField {
    #[new]
    fn new(grid: PyGrid, values: Vec<[f64; 3]>) -> PyResult<Self> {
        VectorField::from_vec(grid.0, values).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn uniform(grid: PyGrid, v: [f64; 3]) -> Self {
        Self(VectorField::uniform(grid.0, v))
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    fn to_list(&self) -> Vec<[f64; 3]> {
        self.0.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.data().len()
    }

    fn __getitem__(&self, idx: usize) -> PyResult<[f64; 3]> {
        self.0
            .data()
            .get(idx)
            .copied()
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(idx))
    }

    fn norm_l2(&self) -> f64 {
        grid::norm_l2(&self.0)
    }

    fn norm_h1(&self) -> f64 {
        grid::norm_h1(&self.0)
    }

    fn inner(&self, other: &PyField) -> PyResult<f64> {
        grid::inner_l2(&self.0, &other.0).map_err(py_err)
    }

    fn max_unit_deviation(&self) -> f64 {
        self.0.max_unit_deviation()
    }

    fn __sub__(&self, other: &PyField) -> PyResult<Self> {
        self.0.sub(&other.0).map(Self).map_err(py_err)
    }
}

#[pyclass(name = "SpinParams", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PySpinParams {
    d0: f64,
    beta: f64,
    beta_prime: f64,
    gamma1: f64,
    gamma2: f64,
    /// Uniform applied current.
    j_e: [f64; 3],
    epsilon: f64,
}

#[pymethods]
impl PySpinParams {
    #[new]
    #[pyo3(signature = (d0 = 1.0, beta = 0.9, beta_prime = 0.8, gamma1 = 1.0, gamma2 = 1.0, j_e = [1.0, 0.0, 0.0], epsilon = 0.0))]
    fn new(d0: f64, beta: f64, beta_prime: f64, gamma1: f64, gamma2: f64, j_e: [f64; 3], epsilon: f64) -> Self {
        Self {
            d0,
            beta,
            beta_prime,
            gamma1,
            gamma2,
            j_e,
            epsilon,
        }
    }
}

impl PySpinParams {
    fn build(&self, g: grid::Grid) -> spin::SpinParams {
        spin::SpinParams {
            d0: spin::Diffusion::Uniform(self.d0),
            beta: self.beta,
            beta_prime: self.beta_prime,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            j_e: VectorField::uniform(g, self.j_e),
            epsilon: self.epsilon,
        }
    }
}

#[pyclass(name = "LlgParams", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyLlgParams {
    c_ex: f64,
    alpha: f64,
    j0: f64,
    mu0: f64,
    kappa: f64,
    e_an: [f64; 3],
}

#[pymethods]
impl PyLlgParams {
    #[new]
    #[pyo3(signature = (c_ex = 1.0, alpha = 1.0, j0 = 1.0, mu0 = 1.0, kappa = 0.0, e_an = [0.0, 0.0, 1.0]))]
    fn new(c_ex: f64, alpha: f64, j0: f64, mu0: f64, kappa: f64, e_an: [f64; 3]) -> Self {
        Self {
            c_ex,
            alpha,
            j0,
            mu0,
            kappa,
            e_an,
        }
    }
}

impl PyLlgParams {
    fn build(&self) -> llg::LlgParams {
        llg::LlgParams {
            c_ex: self.c_ex,
            alpha: self.alpha,
            j0: self.j0,
            mu0: self.mu0,
            kappa: self.kappa,
            e_an: self.e_an,
            f: None,
        }
    }
}

#[pyfunction]
fn smooth_twist(grid: PyGrid, amplitude: f64) -> PyField {
    PyField(presets::smooth_twist(grid.0, amplitude))
}

#[pyfunction]
fn random_unit(grid: PyGrid, seed: u64) -> PyField {
    PyField(presets::random_unit(grid.0, seed))
}

#[pyfunction]
fn demag_field(m: &PyField) -> PyResult<PyField> {
    demag::demag_field(&m.0).map(PyField).map_err(py_err)
}

fn solver(tol: f64) -> spin::SolverOptions {
    spin::SolverOptions::default().with_tol(tol)
}

/// `H_s[m]` and the Krylov iteration count.
#[pyfunction]
#[pyo3(signature = (m, params, tol = 1e-10))]
fn solve_stationary_spin(m: &PyField, params: &PySpinParams, tol: f64) -> PyResult<(PyField, usize)> {
    let p = params.build(*m.0.grid());
    let sol = spin::solve_stationary_spin(&m.0, &p, &solver(tol), None).map_err(py_err)?;
    Ok((PyField(sol.s), sol.stats.iterations))
}

#[pyfunction]
#[pyo3(signature = (s_old, m, params, dt, tol = 1e-10))]
fn step_spin_transient(s_old: &PyField, m: &PyField, params: &PySpinParams, dt: f64, tol: f64) -> PyResult<PyField> {
    let p = params.build(*m.0.grid());
    spin::step_spin_transient(&s_old.0, &m.0, &p, dt, &solver(tol))
        .map(|s| PyField(s.s))
        .map_err(py_err)
}

#[pyfunction]
fn ellipticity_report(m: &PyField, params: &PySpinParams) -> PyResult<f64> {
    spin::ellipticity_report(&m.0, &params.build(*m.0.grid())).map_err(py_err)
}

#[pyfunction]
fn effective_field(m: &PyField, params: &PyLlgParams) -> PyResult<PyField> {
    let lp = params.build();
    let kernel = (lp.mu0 != 0.0).then(|| demag::DemagKernel::new(m.0.grid()));
    llg::effective_field(&m.0, &lp, kernel.as_ref()).map(PyField).map_err(py_err)
}

#[pyfunction]
fn llg_rhs(m: &PyField, h: &PyField, alpha: f64) -> PyResult<PyField> {
    llg::llg_rhs(&m.0, &h.0, alpha).map(PyField).map_err(py_err)
}

#[pyfunction]
fn energy<'py>(py: Python<'py>, m: &PyField, params: &PyLlgParams) -> PyResult<Bound<'py, PyAny>> {
    let lp = params.build();
    let kernel = (lp.mu0 != 0.0).then(|| demag::DemagKernel::new(m.0.grid()));
    let e = llg::energy(&m.0, &lp, kernel.as_ref(), None).map_err(py_err)?;
    let d = to_py(py, &e)?;
    d.set_item("total", e.total())?;
    Ok(d)
}

fn config(text: &str) -> PyResult<SimulationConfig> {
    parse_config_str(text).map_err(py_err)
}

/// Validated config, echoed back as a dict.
#[pyfunction]
fn parse_config<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &config(text)?)
}

/// Runs a TOML config; returns the energy ledger and the final state.
#[pyfunction]
fn run<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let problem = Problem::from_config(&config(text)?).map_err(py_err)?;
    let traj = py.detach(|| drivers::run(&problem)).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("ledger", to_py(py, &traj.ledger.rows)?)?;
    out.set_item("warnings", traj.ledger.warnings.clone())?;
    out.set_item("t", traj.final_state.t)?;
    out.set_item("m", PyField(traj.final_state.m.clone()))?;
    out.set_item("s", PyField(traj.final_state.s.clone()))?;
    out.set_item("solver_stats", to_py(py, &traj.solver_stats)?)?;
    Ok(out.into_any())
}

#[pyfunction]
fn epsilon_sweep<'py>(py: Python<'py>, text: &str, eps: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let problem = Problem::from_config(&config(text)?).map_err(py_err)?;
    let report = py.detach(|| drivers::epsilon_sweep(&problem, &eps)).map_err(py_err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (text, distances = vec![1e-1, 1e-2, 1e-3]))]
fn lipschitz_probe<'py>(py: Python<'py>, text: &str, distances: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let p = Problem::from_config(&config(text)?).map_err(py_err)?;
    let report = py
        .detach(|| drivers::lipschitz_probe(&p.m0, &p.spin, &distances, &p.solver))
        .map_err(py_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn uniqueness_probe<'py>(py: Python<'py>, text: &str, levels: usize) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(text)?;
    let report = py.detach(|| drivers::uniqueness_probe(&cfg, levels)).map_err(py_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn validate<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    let checks = py.detach(spindrift::validate::run_all);
    to_py(py, &checks)
}

#[pymodule]
fn spindrift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PySpinParams>()?;
    m.add_class::<PyLlgParams>()?;
    m.add_function(wrap_pyfunction!(smooth_twist, m)?)?;
    m.add_function(wrap_pyfunction!(random_unit, m)?)?;
    m.add_function(wrap_pyfunction!(demag_field, m)?)?;
    m.add_function(wrap_pyfunction!(solve_stationary_spin, m)?)?;
    m.add_function(wrap_pyfunction!(step_spin_transient, m)?)?;
    m.add_function(wrap_pyfunction!(ellipticity_report, m)?)?;
    m.add_function(wrap_pyfunction!(effective_field, m)?)?;
    m.add_function(wrap_pyfunction!(llg_rhs, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(lipschitz_probe, m)?)?;
    m.add_function(wrap_pyfunction!(uniqueness_probe, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}

//! Python bindings. Fields travel as flat row-major lists of floats.

use fkdv::config::periodic_bo_wave;
use fkdv::diagnostics::{self, DiagnosticSpec};
use fkdv::groundstate::{self, PetviashviliOptions};
use fkdv::propagator::{self, ModelParams, Nonlinearity, Scheme, StepperConfig};
use fkdv::scenarios::{self, ScenarioConfig};
use fkdv::{snapshot, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(fkdv, BlowUpError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::BlowUp { .. } => BlowUpError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Grid", module = "fkdv", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: fkdv::Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(dim: usize, n: usize, half_length: f64) -> PyResult<Self> {
        Ok(PyGrid {
            inner: fkdv::Grid::new(dim, n, half_length).map_err(py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn half_length(&self) -> f64 {
        self.inner.half_length()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Coordinates of every sample; tuples `(x,)` or `(x1, x2)`.
    fn points(&self) -> Vec<Vec<f64>> {
        let d = self.inner.dim();
        (0..self.inner.len()).map(|i| self.inner.point(i)[..d].to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(dim={}, n={}, half_length={})",
            self.inner.dim(),
            self.inner.n(),
            self.inner.half_length()
        )
    }
}

#[pyclass(name = "Field", module = "fkdv", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: fkdv::Field,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        Ok(PyField {
            inner: fkdv::Field::from_values(&grid.inner, values).map_err(py_err)?,
        })
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: self.inner.grid().clone(),
        }
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn sup_norm(&self) -> f64 {
        self.inner.sup_norm()
    }

    fn l2_norm(&self) -> f64 {
        self.inner.l2_norm()
    }

    fn integral(&self) -> f64 {
        self.inner.integral()
    }

    fn weighted_norm(&self, r: f64) -> PyResult<f64> {
        diagnostics::weighted_l2_norm(&self.inner, r).map_err(py_err)
    }

    fn sobolev_norm(&self, s: f64) -> PyResult<f64> {
        diagnostics::sobolev_norm(&self.inner, s).map_err(py_err)
    }

    fn moment(&self, beta: Vec<u32>) -> PyResult<f64> {
        diagnostics::moment(&self.inner, &beta).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.grid().len()
    }
}

#[pyclass(name = "Model", module = "fkdv", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    /// `nonlinearities` is a list of `(k, nu)` pairs with `nu = +1` or `-1`.
    #[new]
    fn new(a: f64, nonlinearities: Vec<(u32, i32)>, dim: usize) -> PyResult<Self> {
        let terms = nonlinearities
            .into_iter()
            .map(|(k, nu)| Nonlinearity::new(k, nu))
            .collect::<fkdv::Result<Vec<_>>>()
            .map_err(py_err)?;
        Ok(PyModel {
            inner: ModelParams::new(a, terms, dim).map_err(py_err)?,
        })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn nonlinearities(&self) -> Vec<(u32, i32)> {
        self.inner.nonlinearities.iter().map(|t| (t.k, t.nu)).collect()
    }

    /// `(I1, I2, I3)` of `u`.
    fn invariants(&self, u: &PyField) -> (f64, f64, f64) {
        let inv = diagnostics::conservation(&u.inner, &self.inner);
        (inv.i1, inv.i2, inv.i3)
    }
}

/// Field from a Python callable `f(x)` (1D) or `f(x1, x2)` (2D).
#[pyfunction]
fn field_from_fn(py: Python<'_>, grid: &PyGrid, f: Py<PyAny>) -> PyResult<PyField> {
    let g = &grid.inner;
    let d = g.dim();
    let values = (0..g.len())
        .map(|i| {
            let p = g.point(i);
            let v = if d == 1 {
                f.call1(py, (p[0],))?
            } else {
                f.call1(py, (p[0], p[1]))?
            };
            v.extract::<f64>(py)
        })
        .collect::<PyResult<Vec<f64>>>()?;
    PyField::new(grid, values)
}

/// `U(t) f`.
#[pyfunction]
fn apply_group(f: &PyField, t: f64, a: f64) -> PyResult<PyField> {
    Ok(PyField {
        inner: propagator::apply_group(&f.inner, t, a).map_err(py_err)?,
    })
}

/// Integrates to `t_end`; returns the final field and a list of record dicts.
#[pyfunction]
#[pyo3(signature = (u0, model, dt, t_end, record_every = 10, dealias_fraction = 2.0 / 3.0, scheme = "etdrk4", weights = vec![0.0, 0.5, 1.0]))]
#[allow(clippy::too_many_arguments)]
fn evolve<'py>(
    py: Python<'py>,
    u0: &PyField,
    model: &PyModel,
    dt: f64,
    t_end: f64,
    record_every: usize,
    dealias_fraction: f64,
    scheme: &str,
    weights: Vec<f64>,
) -> PyResult<(PyField, Vec<Bound<'py, PyDict>>)> {
    let scheme = match scheme {
        "etdrk4" => Scheme::Etdrk4,
        "ifrk4" => Scheme::Ifrk4,
        other => return Err(PyValueError::new_err(format!("unknown scheme `{other}`"))),
    };
    let cfg = StepperConfig {
        dt,
        t_end,
        scheme,
        dealias_fraction,
        record_every,
        ..StepperConfig::default()
    };
    let spec = DiagnosticSpec {
        weights,
        sobolev: Vec::new(),
    };
    let traj = py
        .detach(|| propagator::evolve(&u0.inner, &model.inner, &cfg, &spec, |_| {}))
        .map_err(py_err)?;
    let records = traj
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("t", r.t)?;
            d.set_item("I1", r.i1)?;
            d.set_item("I2", r.i2)?;
            d.set_item("I3", r.i3)?;
            d.set_item("sup_norm", r.sup_norm)?;
            d.set_item("M1", r.moment([1, 0]))?;
            d.set_item("seam_flux", r.seam_flux)?;
            d.set_item("weighted_norms", r.weighted_norms.clone())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((PyField { inner: traj.final_state }, records))
}

/// Petviashvili ground state; returns `(profile, info)`.
#[pyfunction]
#[pyo3(signature = (model, grid, c, tol = 1e-9, max_iter = 2000))]
fn ground_state<'py>(
    py: Python<'py>,
    model: &PyModel,
    grid: &PyGrid,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<(PyField, Bound<'py, PyDict>)> {
    let seed = groundstate::default_seed(&grid.inner);
    let res = py
        .detach(|| groundstate::petviashvili_solve(&model.inner, c, &seed, PetviashviliOptions { tol, max_iter }))
        .map_err(py_err)?;
    let info = PyDict::new(py);
    info.set_item("residual", res.residual)?;
    info.set_item("stabilizer", res.stabilizer)?;
    info.set_item("iterations", res.iterations)?;
    info.set_item("converged", res.converged)?;
    info.set_item("min_value", res.min_value)?;
    info.set_item("tail_exponent", res.tail_exponent)?;
    Ok((PyField { inner: res.profile }, info))
}

/// Exact periodic Benjamin-Ono wave of speed `c` on a 1D grid.
#[pyfunction]
fn bo_wave(grid: &PyGrid, c: f64) -> PyResult<PyField> {
    Ok(PyField {
        inner: periodic_bo_wave(&grid.inner, c).map_err(py_err)?,
    })
}

/// Fitted log-log tail exponent of `u` on the radial window `(lo, hi)`.
#[pyfunction]
fn tail_exponent(u: &PyField, lo: f64, hi: f64) -> PyResult<f64> {
    diagnostics::tail_exponent_fit(&u.inner, (lo, hi))
        .map(|f| f.exponent)
        .map_err(py_err)
}

/// `(s1, s2)` for the decay-gain quadratic.
#[pyfunction]
fn regularity_thresholds(d: u32, k: u32) -> PyResult<(f64, f64)> {
    diagnostics::regularity_thresholds(d, k).map_err(py_err)
}

/// Runs a named scenario with optional TOML overrides; returns the report
/// as a JSON string.
#[pyfunction]
#[pyo3(signature = (name, config = ""))]
fn run_scenario(py: Python<'_>, name: &str, config: &str) -> PyResult<String> {
    let cfg = ScenarioConfig::from_toml(name, config).map_err(py_err)?;
    let report = py.detach(|| scenarios::run(&cfg)).map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn write_snapshot(path: &str, u: &PyField, a: f64) -> PyResult<()> {
    snapshot::write(path.as_ref(), &u.inner, a).map_err(py_err)
}

/// Returns `(field, a)`.
#[pyfunction]
fn read_snapshot(path: &str) -> PyResult<(PyField, f64)> {
    let snap = snapshot::read(path.as_ref()).map_err(py_err)?;
    Ok((PyField { inner: snap.field }, snap.a))
}

#[pymodule]
#[pyo3(name = "fkdv")]
fn fkdv_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyModel>()?;
    m.add("BlowUpError", m.py().get_type::<BlowUpError>())?;
    m.add("SCENARIOS", scenarios::NAMES.to_vec())?;
    m.add_function(wrap_pyfunction!(field_from_fn, m)?)?;
    m.add_function(wrap_pyfunction!(apply_group, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(ground_state, m)?)?;
    m.add_function(wrap_pyfunction!(bo_wave, m)?)?;
    m.add_function(wrap_pyfunction!(tail_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(regularity_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(write_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(read_snapshot, m)?)?;
    Ok(())
}

//! Python bindings: pressure laws, Klein-Gordon frequencies, rate fits,
//! Neumann-Poisson and Leray solves on nested lists, and whole experiment plans.

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nsplab::acoustic::AcousticParams;
use nsplab::harness::{self, Config, ExperimentPlan, Scenario};
use nsplab::{fields, thermo, Error, GridSpec, VectorField, WaveguideGrid};

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_array(rows: Vec<Vec<f64>>, shape: (usize, usize)) -> PyResult<Array2<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(PyValueError::new_err(format!("expected a {}x{} nested list", shape.0, shape.1)));
    }
    Ok(Array2::from_shape_fn(shape, |(i, j)| rows[i][j]))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Barotropic law `p(n) = a n^{5/3}`, optionally perturbed (`"exp-linear:b"`).
#[pyclass(frozen)]
struct PressureLaw {
    inner: thermo::PressureLaw,
}

#[pymethods]
impl PressureLaw {
    #[new]
    #[pyo3(signature = (a = 1.0, perturbation = None))]
    fn new(a: f64, perturbation: Option<&str>) -> PyResult<Self> {
        let mut inner = thermo::PressureLaw::power(a).map_err(py_err)?;
        if let Some(id) = perturbation {
            inner = inner.with_perturbation(thermo::Perturbation::parse(id).map_err(py_err)?).map_err(py_err)?;
        }
        Ok(Self { inner })
    }

    fn pressure(&self, n: f64) -> PyResult<f64> {
        self.inner.pressure(n).map_err(py_err)
    }

    fn derivative(&self, n: f64) -> PyResult<f64> {
        self.inner.pressure_derivative(n).map_err(py_err)
    }

    fn enthalpy(&self, n: f64) -> PyResult<f64> {
        self.inner.enthalpy(n).map_err(py_err)
    }

    fn relative_entropy(&self, n: f64, r: f64) -> PyResult<f64> {
        self.inner.relative_entropy(n, r).map_err(py_err)
    }
}

/// Axial torus times a cross-section; `height`/`points` select the strip.
#[pyclass(frozen)]
struct Grid {
    inner: WaveguideGrid,
}

#[pymethods]
impl Grid {
    #[new]
    #[pyo3(signature = (radius, ny, height = None, points = 17))]
    fn new(radius: f64, ny: usize, height: Option<f64>, points: usize) -> PyResult<Self> {
        let spec = match height {
            Some(h) => GridSpec::strip(radius, ny, h, points),
            None => GridSpec::line(radius, ny),
        };
        Ok(Self { inner: WaveguideGrid::new(spec).map_err(py_err)? })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    fn y_coords(&self) -> Vec<f64> {
        self.inner.y_coords()
    }

    fn integrate(&self, f: Vec<Vec<f64>>) -> PyResult<f64> {
        Ok(self.inner.integrate(&to_array(f, self.inner.shape())?))
    }

    /// Mean-free `Φ` with `ΔΦ = q` and Neumann walls.
    fn poisson(&self, q: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let q = to_array(q, self.inner.shape())?;
        Ok(to_rows(&fields::solve_poisson_neumann(&self.inner, &q).map_err(py_err)?.potential))
    }

    /// Divergence-free part of a vector field given as one nested list per component.
    fn leray(&self, components: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let shape = self.inner.shape();
        if components.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!("expected {} components", self.inner.dim())));
        }
        let comps = components.into_iter().map(|c| to_array(c, shape)).collect::<PyResult<Vec<_>>>()?;
        let h = fields::leray(&self.inner, &VectorField::from_components(comps)).map_err(py_err)?;
        Ok(h.components().iter().map(to_rows).collect())
    }
}

/// Undamped Klein-Gordon frequency `√(p'(λ + ξ²) + n̄)` on the `t/ε` clock.
#[pyfunction]
#[pyo3(signature = (lam, xi, sound_sq = 5.0 / 3.0, nbar = 1.0, epsilon = 0.1))]
fn kg_frequency(lam: f64, xi: f64, sound_sq: f64, nbar: f64, epsilon: f64) -> PyResult<f64> {
    AcousticParams { sound_sq, nbar, epsilon, tau: f64::INFINITY }.kg_frequency(lam, xi).map_err(py_err)
}

/// Log-log least squares; returns `(slope, intercept, r_squared, ci_low, ci_high)`.
#[pyfunction]
fn fit_rate(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<(f64, f64, f64, f64, f64)> {
    let f = harness::fit_rate(&xs, &ys).map_err(py_err)?;
    Ok((f.slope, f.intercept, f.r_squared, f.ci_low, f.ci_high))
}

/// Runs a scenario with TOML overrides and returns the record as JSON.
#[pyfunction]
#[pyo3(signature = (scenario, config = "", threads = 0))]
fn run_plan(py: Python<'_>, scenario: &str, config: &str, threads: usize) -> PyResult<String> {
    let scenario: Scenario = scenario.parse().map_err(py_err)?;
    let config = Config::parse(config).map_err(py_err)?;
    let plan = ExperimentPlan::from_config(scenario, &config).map_err(py_err)?;
    let record = py.detach(|| harness::run(&plan, threads)).map_err(py_err)?;
    serde_json::to_string(&record).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn nsplab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PressureLaw>()?;
    m.add_class::<Grid>()?;
    m.add_function(wrap_pyfunction!(kg_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run_plan, m)?)?;
    Ok(())
}

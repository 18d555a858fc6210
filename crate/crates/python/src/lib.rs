//! Python bindings: models, kernels, path simulation and the experiment runner.

use numpy::{IntoPyArray, PyArray1, PyArray2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::Serialize;
use svelab::config::{KernelConfig, ModelConfig};
use svelab::{run_payload, ExperimentConfig};
use svelab_core::diagnostics::{qv_convergence, rate_study, EnsembleSettings};
use svelab_core::engine::{kappa as kappa_fn, DiagonalKernel, DiffusionField, DriftField, ModelSpec, SchemeSolver};
use svelab_core::kernels::{check_admissibility, GeometricGrid, KernelComponent};
use svelab_core::paths::{generate_brownian, SeedSpec};
use svelab_core::SveError;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn core_err(e: SveError) -> PyErr {
    value_err(e)
}

/// Accepts a JSON string or any object `json.dumps` can serialize.
fn json_text(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.cast::<PyString>() {
        return Ok(s.to_str()?.to_owned());
    }
    obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Drift and diffusion fields of a model, built from the config schema.
#[pyclass(name = "Model", module = "svelab_py", frozen)]
struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    /// `spec` uses the `model` schema of experiment configs (JSON text or dict).
    #[new]
    #[pyo3(signature = (spec, allow_unbounded=false))]
    fn new(spec: &Bound<'_, PyAny>, allow_unbounded: bool) -> PyResult<Self> {
        let config: ModelConfig = serde_json::from_str(&json_text(spec)?).map_err(value_err)?;
        let inner = config.spec();
        inner.validate(allow_unbounded).map_err(core_err)?;
        Ok(Self { inner })
    }

    /// Scalar model with `b = 0` and `σ(x) = a + b sin x`.
    #[staticmethod]
    #[pyo3(signature = (x0=0.0, a=2.0, b=1.0))]
    fn affine_trig(x0: f64, a: f64, b: f64) -> Self {
        Self { inner: ModelSpec::scalar_affine_trig(x0, a, b) }
    }

    /// Constant drift `mu` (length d) and diffusion `sigma` (row-major d×m).
    #[staticmethod]
    fn constant(x0: Vec<f64>, m: usize, mu: Vec<f64>, sigma: Vec<f64>) -> PyResult<Self> {
        let inner = ModelSpec::new(x0, m, DriftField::Constant { mu }, DiffusionField::Constant { sigma });
        inner.validate(false).map_err(core_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    fn __repr__(&self) -> String {
        format!("Model(d={}, m={})", self.inner.d, self.inner.m)
    }
}

/// Diagonal Volterra kernel.
#[pyclass(name = "Kernel", module = "svelab_py", frozen)]
struct PyKernel {
    inner: DiagonalKernel,
}

#[pymethods]
impl PyKernel {
    /// `spec` uses the `kernel` schema of experiment configs; `d` is the model dimension.
    #[new]
    #[pyo3(signature = (spec, d=1))]
    fn new(spec: &Bound<'_, PyAny>, d: usize) -> PyResult<Self> {
        let config: KernelConfig = serde_json::from_str(&json_text(spec)?).map_err(value_err)?;
        Ok(Self { inner: config.build(d).map_err(core_err)? })
    }

    /// `c u^{H-1/2}` in every component.
    #[staticmethod]
    #[pyo3(signature = (h, c=1.0, d=1))]
    fn fractional(h: f64, c: f64, d: usize) -> PyResult<Self> {
        Ok(Self { inner: DiagonalKernel::fractional(d, c, h).map_err(core_err)? })
    }

    /// `c u^{H-1/2} e^{-λu}` in every component.
    #[staticmethod]
    #[pyo3(signature = (h, lam, c=1.0, d=1))]
    fn tempered(h: f64, lam: f64, c: f64, d: usize) -> PyResult<Self> {
        let comp = KernelComponent::tempered(c, h, lam).map_err(core_err)?;
        Ok(Self { inner: DiagonalKernel::new(vec![comp; d]).map_err(core_err)? })
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Kernel values of one component at the points `u > 0`.
    fn values<'py>(&self, py: Python<'py>, component: usize, u: Vec<f64>) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let comp = self
            .inner
            .components
            .get(component)
            .ok_or_else(|| value_err(format!("component {component} out of range")))?;
        Ok(u.iter().map(|&x| comp.value(x)).collect::<Vec<_>>().into_pyarray(py))
    }

    /// Admissibility report as a dict.
    #[pyo3(signature = (horizon=1.0, tol=0.05))]
    fn admissibility(&self, py: Python<'_>, horizon: f64, tol: f64) -> PyResult<Py<PyAny>> {
        let grid = GeometricGrid::default_for_admissibility(horizon);
        let report = check_admissibility(&self.inner, &grid, tol, horizon).map_err(core_err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Kernel(H={}, d={})", self.inner.h, self.inner.dim())
    }
}

/// Limit-equation constant κ(H).
#[pyfunction]
fn kappa(h: f64) -> PyResult<f64> {
    kappa_fn(h).map_err(core_err)
}

/// Brownian increments of shape `(steps, m)` for one seeded path.
#[pyfunction]
#[pyo3(signature = (seed, path, m, steps, horizon=1.0))]
fn brownian<'py>(
    py: Python<'py>,
    seed: u64,
    path: u64,
    m: usize,
    steps: usize,
    horizon: f64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let grid = generate_brownian(SeedSpec::driving(seed, path), m, steps, horizon).map_err(core_err)?;
    Ok(grid.increments.into_pyarray(py))
}

/// One coupled run: fine reference path, coarse scheme path and rescaled error.
#[pyfunction]
#[pyo3(signature = (model, kernel, n, refinement, seed=0, path=0, horizon=1.0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    model: &PyModel,
    kernel: &PyKernel,
    n: usize,
    refinement: usize,
    seed: u64,
    path: u64,
    horizon: f64,
) -> PyResult<Py<PyAny>> {
    let run = py
        .detach(|| {
            SchemeSolver::new(&model.inner, &kernel.inner, n, refinement, horizon)?
                .coupled(SeedSpec::driving(seed, path))
        })
        .map_err(core_err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("times", run.reference.times.into_pyarray(py))?;
    out.set_item("reference", run.reference.states.into_pyarray(py))?;
    out.set_item("coarse", run.coarse.states.into_pyarray(py))?;
    out.set_item("error", run.error.values.into_pyarray(py))?;
    out.set_item("error_times", run.error.times.into_pyarray(py))?;
    Ok(out.into_any().unbind())
}

/// Strong-rate regression over `n_sequence`; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (model, kernel, n_sequence, refinement=32, paths=500, seed=0, horizon=1.0, tol=0.1))]
#[allow(clippy::too_many_arguments)]
fn rate(
    py: Python<'_>,
    model: &PyModel,
    kernel: &PyKernel,
    n_sequence: Vec<usize>,
    refinement: usize,
    paths: usize,
    seed: u64,
    horizon: f64,
    tol: f64,
) -> PyResult<Py<PyAny>> {
    let settings = EnsembleSettings::new(horizon, refinement, paths, seed);
    let report = py
        .detach(|| rate_study(&model.inner, &kernel.inner, &n_sequence, &settings, tol))
        .map_err(core_err)?;
    to_py(py, &report)
}

/// Quadratic-variation convergence at time `t`; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (model, kernel, n_sequence, refinement=16, paths=1000, seed=0, t=1.0, horizon=1.0, rel_tol=0.1))]
#[allow(clippy::too_many_arguments)]
fn qv(
    py: Python<'_>,
    model: &PyModel,
    kernel: &PyKernel,
    n_sequence: Vec<usize>,
    refinement: usize,
    paths: usize,
    seed: u64,
    t: f64,
    horizon: f64,
    rel_tol: f64,
) -> PyResult<Py<PyAny>> {
    let settings = EnsembleSettings::new(horizon, refinement, paths, seed);
    let report = py
        .detach(|| qv_convergence(&model.inner, &kernel.inner, &n_sequence, &settings, t, rel_tol))
        .map_err(core_err)?;
    to_py(py, &report)
}

/// Runs an experiment config (JSON text or dict) and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (config, threads=None))]
fn run_experiment(py: Python<'_>, config: &Bound<'_, PyAny>, threads: Option<usize>) -> PyResult<Py<PyAny>> {
    let config = ExperimentConfig::from_json(&json_text(config)?).map_err(value_err)?;
    let payload = py.detach(|| run_payload(&config, threads)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &payload.report)
}

#[pymodule]
fn svelab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyKernel>()?;
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(brownian, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(rate, m)?)?;
    m.add_function(wrap_pyfunction!(qv, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}

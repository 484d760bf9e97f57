//! Python bindings for the `spikelab` crate.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use spikelab::free_additive::DEFAULT_EPS;
use spikelab::{AtomicMeasure, Error, FixedPointOptions};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Domain(_) | Error::Measure(_) | Error::Spec(_) | Error::DegenerateOutlier { .. } => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

/// Finitely supported probability measure given as `(location, weight)` pairs.
#[pyclass(name = "AtomicMeasure", frozen)]
pub struct PyMeasure {
    inner: AtomicMeasure,
}

#[pymethods]
impl PyMeasure {
    #[new]
    fn new(atoms: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self { inner: AtomicMeasure::new(atoms).map_err(to_py)? })
    }

    #[staticmethod]
    fn empirical(values: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: AtomicMeasure::empirical(&values).map_err(to_py)? })
    }

    fn atoms(&self) -> Vec<(f64, f64)> {
        self.inner.atoms().iter().map(|a| (a.location, a.weight)).collect()
    }

    fn mass_at(&self, x: f64) -> f64 {
        self.inner.mass_at(x)
    }

    fn moment(&self, k: u32) -> f64 {
        self.inner.moment(k)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("AtomicMeasure({:?})", self.atoms())
    }
}

/// Classification of one spike.
#[pyclass(name = "SpikeVerdict", frozen, get_all)]
pub struct PyVerdict {
    theta: f64,
    multiplicity: usize,
    is_outlier: bool,
    rho: Option<f64>,
    tau: Option<f64>,
    criterion_value: f64,
}

impl From<spikelab::SpikeVerdict> for PyVerdict {
    fn from(v: spikelab::SpikeVerdict) -> Self {
        Self {
            theta: v.theta,
            multiplicity: v.multiplicity,
            is_outlier: v.is_outlier,
            rho: v.rho,
            tau: v.tau,
            criterion_value: v.criterion_value,
        }
    }
}

#[pymethods]
impl PyVerdict {
    fn __repr__(&self) -> String {
        format!(
            "SpikeVerdict(theta={}, multiplicity={}, is_outlier={}, rho={}, tau={})",
            self.theta,
            self.multiplicity,
            if self.is_outlier { "True" } else { "False" },
            py_opt(self.rho),
            py_opt(self.tau)
        )
    }
}

fn py_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "None".into(), |v| v.to_string())
}

fn intervals(v: &[spikelab::OpenInterval]) -> Vec<(f64, f64)> {
    v.iter().map(|g| (g.lo, g.hi)).collect()
}

/// Spiked deformed Wigner model: `nu` is the limiting spectrum of the
/// perturbation, `sigma2` the noise variance.
#[pyclass(name = "AdditiveModel", frozen)]
pub struct PyAdditive {
    inner: spikelab::AdditiveContext,
}

#[pymethods]
impl PyAdditive {
    #[new]
    fn new(nu: &PyMeasure, sigma2: f64) -> PyResult<Self> {
        Ok(Self { inner: spikelab::AdditiveContext::new(nu.inner.clone(), sigma2).map_err(to_py)? })
    }

    fn h(&self, u: f64) -> PyResult<f64> {
        self.inner.h(u).map_err(to_py)
    }

    fn h_prime(&self, u: f64) -> PyResult<f64> {
        self.inner.h_prime(u).map_err(to_py)
    }

    #[pyo3(signature = (theta, multiplicity = 1))]
    fn classify(&self, theta: f64, multiplicity: usize) -> PyResult<PyVerdict> {
        Ok(self.inner.classify_spike(theta, multiplicity).map_err(to_py)?.into())
    }

    fn outlier_set(&self) -> Vec<(f64, f64)> {
        intervals(&self.inner.outlier_set_intervals())
    }

    fn support(&self) -> Vec<(f64, f64)> {
        self.inner.support().intervals
    }

    #[pyo3(signature = (grid, eps = DEFAULT_EPS, tol = 1e-12))]
    fn density(&self, grid: Vec<f64>, eps: f64, tol: f64) -> PyResult<Vec<f64>> {
        let opts = FixedPointOptions::default().with_tol(tol);
        let rows = self.inner.density(&grid, eps, &opts).map_err(to_py)?;
        Ok(rows.into_iter().map(|(_, f)| f).collect())
    }
}

/// Spiked sample covariance model with population spectrum `nu` and ratio `c = N/p`.
#[pyclass(name = "MultiplicativeModel", frozen)]
pub struct PyMultiplicative {
    inner: spikelab::MultiplicativeContext,
}

#[pymethods]
impl PyMultiplicative {
    #[new]
    fn new(nu: &PyMeasure, c: f64) -> PyResult<Self> {
        Ok(Self { inner: spikelab::MultiplicativeContext::new(nu.inner.clone(), c).map_err(to_py)? })
    }

    fn z(&self, x: f64) -> PyResult<f64> {
        self.inner.z(x).map_err(to_py)
    }

    fn z_prime(&self, x: f64) -> PyResult<f64> {
        self.inner.z_prime(x).map_err(to_py)
    }

    fn w(&self, u: f64) -> PyResult<f64> {
        self.inner.w(u).map_err(to_py)
    }

    #[pyo3(signature = (theta, multiplicity = 1))]
    fn classify(&self, theta: f64, multiplicity: usize) -> PyResult<PyVerdict> {
        Ok(self.inner.classify_spike(theta, multiplicity).map_err(to_py)?.into())
    }

    fn outlier_set(&self) -> Vec<(f64, f64)> {
        intervals(&self.inner.outlier_set_intervals())
    }

    fn support(&self) -> Vec<(f64, f64)> {
        self.inner.support().intervals
    }

    fn mass_at_zero(&self) -> f64 {
        self.inner.mass_at_zero()
    }

    #[pyo3(signature = (grid, eps = DEFAULT_EPS, tol = 1e-12))]
    fn density(&self, grid: Vec<f64>, eps: f64, tol: f64) -> PyResult<Vec<f64>> {
        let opts = FixedPointOptions::default().with_tol(tol);
        let rows = self.inner.density(&grid, eps, &opts).map_err(to_py)?;
        Ok(rows.into_iter().map(|(_, f)| f).collect())
    }
}

/// Marchenko-Pastur density with ratio `c` at `x` (continuous part).
#[pyfunction]
fn mp_density(c: f64, x: f64) -> PyResult<f64> {
    spikelab::mp_density(c, x).map_err(to_py)
}

/// Classifies the spikes of a JSON model spec; returns the report as JSON.
#[pyfunction]
fn analyze(spec_json: &str) -> PyResult<String> {
    let spec = spikelab::cli::parse_spec(spec_json).map_err(to_py)?;
    let spikes: Vec<(f64, usize)> = spec.spikes().iter().map(|s| (s.theta, s.multiplicity)).collect();
    let report = spec.model().report(&spikes).map_err(to_py)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Monte Carlo verification of a JSON model spec; returns the result as JSON.
#[pyfunction]
#[pyo3(signature = (spec_json, reps = 20))]
fn simulate(py: Python<'_>, spec_json: &str, reps: usize) -> PyResult<String> {
    let spec = spikelab::cli::parse_spec(spec_json).map_err(to_py)?;
    let result = py.detach(|| spikelab::verify::run(&spec, reps)).map_err(to_py)?;
    serde_json::to_string(&result).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule(name = "spikelab")]
fn spikelab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyVerdict>()?;
    m.add_class::<PyAdditive>()?;
    m.add_class::<PyMultiplicative>()?;
    m.add_function(wrap_pyfunction!(mp_density, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}

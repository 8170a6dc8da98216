//! Python bindings for `mixem`.
//!
//! Structured results (traces, reports, tables) are returned as plain
//! dictionaries and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::Serialize;

use mixem::{
    Algorithm, ExperimentSpec, Family, FitConfig, LambdaSchedule, Means, QuadratureSettings,
};

create_exception!(
    pymixem,
    NumericalError,
    PyArithmeticError,
    "Quadrature or EM numerics broke down."
);

fn to_py_err(e: mixem::Error) -> PyErr {
    match e {
        mixem::Error::InvalidArgument(m) => PyValueError::new_err(m),
        mixem::Error::NumericalFailure { .. } => NumericalError::new_err(e.to_string()),
        mixem::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPyErr<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> OrPyErr<T> for mixem::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

/// Converts any serializable value into Python objects via JSON.
fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn means_from(rows: Vec<Vec<f64>>) -> PyResult<Means> {
    Means::from_rows(&rows).py_err()
}

#[pyclass(name = "MixtureModel", module = "pymixem", frozen)]
struct PyMixtureModel {
    inner: mixem::MixtureModel,
}

#[pymethods]
impl PyMixtureModel {
    /// `MixtureModel(means, family="gaussian", scale=1.0)`; `means` is a list of rows.
    #[new]
    #[pyo3(signature = (means, family = "gaussian", scale = 1.0))]
    fn new(means: Vec<Vec<f64>>, family: &str, scale: f64) -> PyResult<Self> {
        let family: Family = family.parse().py_err()?;
        let inner = mixem::MixtureModel::new(family, means_from(means)?, scale).py_err()?;
        Ok(PyMixtureModel { inner })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.family().to_string()
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.inner.means().to_rows()
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        mixem::log_density(&self.inner, &x).py_err()
    }

    fn density(&self, x: Vec<f64>) -> PyResult<f64> {
        mixem::density(&self.inner, &x).py_err()
    }

    fn responsibilities(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        mixem::responsibilities(&self.inner, &x).py_err()
    }

    /// Average log-likelihood of `samples`.
    fn log_likelihood(&self, samples: &PySampleSet) -> PyResult<f64> {
        mixem::log_likelihood(&self.inner, &samples.inner).py_err()
    }

    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, py: Python<'_>, n: usize, seed: u64) -> PySampleSet {
        let model = self.inner.clone();
        PySampleSet {
            inner: py.detach(move || mixem::sample(&model, n, seed)),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyMixtureModel { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "MixtureModel(family={:?}, k={}, d={}, scale={})",
            self.inner.family().to_string(),
            self.inner.k(),
            self.inner.d(),
            self.inner.scale()
        )
    }
}

#[pyclass(name = "SampleSet", module = "pymixem", frozen)]
struct PySampleSet {
    inner: mixem::SampleSet,
}

#[pymethods]
impl PySampleSet {
    /// `SampleSet(rows, seed=0)`; `rows` is a list of points.
    #[new]
    #[pyo3(signature = (rows, seed = 0))]
    fn new(rows: Vec<Vec<f64>>, seed: u64) -> PyResult<Self> {
        Ok(PySampleSet {
            inner: mixem::SampleSet::from_rows(&rows, seed).py_err()?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn centered(&self) -> bool {
        self.inner.centered
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    fn column_means(&self) -> Vec<f64> {
        self.inner.column_means()
    }

    /// Returns the centered copy and the removed column mean.
    fn center(&self) -> PyResult<(PySampleSet, Vec<f64>)> {
        let (inner, shift) = mixem::center_samples(&self.inner).py_err()?;
        Ok((PySampleSet { inner }, shift))
    }

    fn save_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        mixem::io::save_samples_csv(&self.inner, &path).py_err()
    }

    #[staticmethod]
    #[pyo3(signature = (path, seed = 0))]
    fn load_csv(path: std::path::PathBuf, seed: u64) -> PyResult<Self> {
        Ok(PySampleSet {
            inner: mixem::io::load_samples_csv(&path, seed).py_err()?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("SampleSet(n={}, d={})", self.inner.n(), self.inner.d())
    }
}

#[pyclass(name = "FitResult", module = "pymixem", frozen)]
struct PyFitResult {
    inner: mixem::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.inner.means.to_rows()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations_used(&self) -> usize {
        self.inner.iterations_used
    }

    #[getter]
    fn lambda_draws(&self) -> Vec<f64> {
        self.inner.lambda_draws.clone()
    }

    #[getter]
    fn initial_loglik(&self) -> f64 {
        self.inner.initial_loglik
    }

    #[getter]
    fn final_loglik(&self) -> f64 {
        self.inner.final_loglik()
    }

    #[getter]
    fn degenerate_components(&self) -> Vec<usize> {
        self.inner.degenerate_components.clone()
    }

    /// One dict per iteration: iter, loglik, objective, moment_residual,
    /// max_step, lambda.
    #[getter]
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.trace)
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(converged={}, iterations_used={}, final_loglik={})",
            self.inner.converged,
            self.inner.iterations_used,
            self.inner.final_loglik()
        )
    }
}

fn parse_algorithm(name: &str, m: Option<f64>, lambda_dist: Option<&str>) -> PyResult<Algorithm> {
    let algo = match (name, m, lambda_dist) {
        ("naive", None, None) => Algorithm::Naive,
        ("regularized", Some(m), None) => Algorithm::Regularized { m },
        ("regularized", None, _) => return Err(PyValueError::new_err("regularized needs m")),
        ("stochastic", None, dist) => Algorithm::Stochastic {
            schedule: match dist {
                Some(s) => s.parse::<LambdaSchedule>().py_err()?,
                None => LambdaSchedule::default(),
            },
        },
        ("naive" | "regularized" | "stochastic", _, _) => {
            return Err(PyValueError::new_err(format!(
                "m applies to regularized and lambda_dist to stochastic, not {name}"
            )))
        }
        _ => return Err(PyValueError::new_err(format!("unknown algorithm {name:?}"))),
    };
    algo.validate().py_err()?;
    Ok(algo)
}

/// Fits component means starting from `init` (a list of rows).
#[pyfunction]
#[pyo3(signature = (init, samples, algorithm = "naive", m = None, lambda_dist = None, max_iters = 3000, param_tol = 1e-8, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    init: Vec<Vec<f64>>,
    samples: &PySampleSet,
    algorithm: &str,
    m: Option<f64>,
    lambda_dist: Option<&str>,
    max_iters: usize,
    param_tol: f64,
    seed: u64,
) -> PyResult<PyFitResult> {
    let config = FitConfig {
        algorithm: parse_algorithm(algorithm, m, lambda_dist)?,
        max_iters,
        param_tol,
        seed,
    };
    let init = means_from(init)?;
    let data = samples.inner.clone();
    let inner = py
        .detach(move || mixem::fit(&init, &data, &config))
        .py_err()?;
    Ok(PyFitResult { inner })
}

/// Optimal relabeling of `estimated` against `truth`; returns a dict with
/// permutation, distances, max_distance, total_sq_distance, moment_residual.
#[pyfunction]
fn match_components<'py>(
    py: Python<'py>,
    estimated: Vec<Vec<f64>>,
    truth: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let report = mixem::match_components(&means_from(estimated)?, &means_from(truth)?).py_err()?;
    to_python(py, &report)
}

#[pyfunction]
#[pyo3(signature = (estimated, truth, threshold = 0.5))]
fn is_success(estimated: Vec<Vec<f64>>, truth: Vec<Vec<f64>>, threshold: f64) -> PyResult<bool> {
    mixem::is_success(&means_from(estimated)?, &means_from(truth)?, threshold).py_err()
}

#[pyfunction]
fn em_map_quadrature(lam: f64, mu: f64) -> PyResult<f64> {
    mixem::em_map_quadrature(lam, mu, &QuadratureSettings::default()).py_err()
}

#[pyfunction]
fn em_map_ratio_form(lam: f64, mu: f64) -> PyResult<f64> {
    mixem::em_map_ratio_form(lam, mu, &QuadratureSettings::default()).py_err()
}

#[pyfunction]
fn em_map_closed(lam: f64, eta: f64) -> PyResult<f64> {
    mixem::em_map_closed(lam, eta).py_err()
}

#[pyfunction]
fn dm_dlambda_closed(lam: f64, mu: f64) -> PyResult<f64> {
    mixem::dm_dlambda_closed(lam, mu).py_err()
}

#[pyfunction]
fn dm_deta_closed(lam: f64, eta: f64) -> PyResult<f64> {
    mixem::dm_deta_closed(lam, eta).py_err()
}

#[pyfunction]
fn contraction_constants<'py>(
    py: Python<'py>,
    lambda0: f64,
    mu_star: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_python(
        py,
        &mixem::contraction_constants(lambda0, mu_star).py_err()?,
    )
}

/// Iterates the population EM map; returns the trajectory as a dict.
#[pyfunction]
#[pyo3(signature = (lambda0, mu_star, max_iters = 1000, tol = 1e-8))]
fn run_population_em<'py>(
    py: Python<'py>,
    lambda0: f64,
    mu_star: f64,
    max_iters: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let traj = py
        .detach(|| {
            mixem::run_population_em(
                lambda0,
                mu_star,
                max_iters,
                tol,
                &QuadratureSettings::default(),
            )
        })
        .py_err()?;
    to_python(py, &traj)
}

/// Runs a random-restart study. `spec` is a dict or JSON string with the
/// experiment settings. Returns a dict with `table` (list of rows),
/// `table_csv`, `truncated` and `spec_hash`.
#[pyfunction]
#[pyo3(signature = (spec, threads = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    spec: &Bound<'py, PyAny>,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let text: String = if spec.is_instance_of::<PyString>() {
        spec.extract()?
    } else {
        py.import("json")?
            .call_method1("dumps", (spec,))?
            .extract()?
    };
    let spec: ExperimentSpec =
        serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let options = mixem::RunOptions {
        threads,
        cancel: None,
    };
    let out = py
        .detach(|| mixem::run_experiment(&spec, &options))
        .py_err()?;

    #[derive(Serialize)]
    struct Summary<'a> {
        table: &'a [mixem::SuccessRow],
        table_csv: String,
        truncated: bool,
        spec_hash: &'a str,
    }
    let summary = Summary {
        table: &out.table.rows,
        table_csv: out.table.to_csv_string(),
        truncated: out.truncated,
        spec_hash: &out.table.spec_hash,
    };
    to_python(py, &summary)
}

/// Default full-scale experiment settings as a dict.
#[pyfunction]
fn default_spec(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_python(py, &ExperimentSpec::default())
}

#[pymodule]
pub fn pymixem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMixtureModel>()?;
    m.add_class::<PySampleSet>()?;
    m.add_class::<PyFitResult>()?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(match_components, m)?)?;
    m.add_function(wrap_pyfunction!(is_success, m)?)?;
    m.add_function(wrap_pyfunction!(em_map_quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(em_map_ratio_form, m)?)?;
    m.add_function(wrap_pyfunction!(em_map_closed, m)?)?;
    m.add_function(wrap_pyfunction!(dm_dlambda_closed, m)?)?;
    m.add_function(wrap_pyfunction!(dm_deta_closed, m)?)?;
    m.add_function(wrap_pyfunction!(contraction_constants, m)?)?;
    m.add_function(wrap_pyfunction!(run_population_em, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(default_spec, m)?)?;
    Ok(())
}

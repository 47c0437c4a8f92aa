//! Python bindings: configs, experiments, GP regression helpers, and
//! diagnostics. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use svgpvae::config::{DataSource, ExperimentConfig};
use svgpvae::data::{generate_moving_ball, BallConfig};
use svgpvae::kernels::Kernel;
use svgpvae::models::{decode, encode, load_checkpoint, save_checkpoint};
use svgpvae::numerics::Tensor;
use svgpvae::sparse_gp::{self, InducingPoints, LatentDataset};
use svgpvae::training::{self as tr, RunStatus};

/// A matrix as a list of rows.
type Rows = Vec<Vec<f64>>;

fn err(e: svgpvae::Error) -> PyErr {
    use svgpvae::Error as E;
    match e {
        E::Io(_) | E::Idx(_) | E::Checkpoint(_) => PyIOError::new_err(e.to_string()),
        E::NonFinite(_) | E::NotPositiveDefinite { .. } | E::CapExceeded { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    Tensor::from_rows(&rows).map_err(err)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn column(v: Vec<f64>) -> Tensor {
    Tensor::column(v)
}

/// Parses serialized JSON into Python objects.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// An experiment configuration.
#[pyclass(name = "Config", module = "svgpvae_py", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Defaults (the moving-ball experiment).
    #[new]
    fn new() -> Self {
        Self {
            inner: ExperimentConfig::default(),
        }
    }

    /// `moving-ball`, `rotated-digits`, or `toy-regression`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let source = match name {
            "moving-ball" => DataSource::MovingBall,
            "rotated-digits" => DataSource::RotatedDigits,
            "toy-regression" => DataSource::ToyRegression,
            _ => return Err(PyValueError::new_err(format!("unknown preset `{name}`"))),
        };
        Ok(Self {
            inner: ExperimentConfig::preset(source),
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::from_toml(text).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(model={:?}, source={:?}, epochs={})",
            self.inner.model.kind, self.inner.data.source, self.inner.training.epochs
        )
    }
}

/// Data, model state, and held-out material built from a config.
#[pyclass(name = "Experiment", module = "svgpvae_py", unsendable)]
struct PyExperiment {
    inner: tr::Experiment,
}

#[pymethods]
impl PyExperiment {
    /// Relative data paths resolve against `base_dir`.
    #[new]
    #[pyo3(signature = (config, base_dir = "."))]
    fn new(config: &PyConfig, base_dir: &str) -> PyResult<Self> {
        Ok(Self {
            inner: tr::build_experiment(&config.inner, &PathBuf::from(base_dir)).map_err(err)?,
        })
    }

    /// Trains in place and returns the run log as a dict. Raises on a
    /// numerical abort; the state then holds the last good parameters.
    fn train<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let log = tr::train(&mut self.inner, |_, _, _| Ok(())).map_err(err)?;
        if let RunStatus::Aborted { epoch, step, reason } = &log.status {
            return Err(PyRuntimeError::new_err(format!("{reason} at epoch {epoch}, step {step}")));
        }
        to_py(py, &log)
    }

    fn evaluate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &tr::evaluate_experiment(&self.inner).map_err(err)?)
    }

    /// Encoder means and standard deviations for rows of `y`.
    fn encode(&self, y: Vec<Vec<f64>>) -> PyResult<(Rows, Rows)> {
        let (m, s) = encode(&self.inner.state, &tensor(y)?).map_err(err)?;
        Ok((rows(&m), rows(&s)))
    }

    fn decode(&self, z: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&decode(&self.inner.state, &tensor(z)?)))
    }

    fn save_checkpoint(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.inner.state, &PathBuf::from(path)).map_err(err)
    }

    fn load_checkpoint(&mut self, path: &str) -> PyResult<()> {
        self.inner.state = load_checkpoint(&PathBuf::from(path)).map_err(err)?;
        Ok(())
    }

    #[getter]
    fn lengthscale(&self) -> f64 {
        self.inner.state.kernel().lengthscale()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.state.num_trainable()
    }
}

fn dataset(x: Vec<Vec<f64>>, y: Vec<f64>, sigma: Vec<f64>) -> PyResult<LatentDataset> {
    LatentDataset::new(tensor(x)?, column(y), column(sigma)).map_err(err)
}

/// RBF kernel matrix between two row sets.
#[pyfunction]
#[pyo3(signature = (x1, x2, lengthscale = 1.0, variance = 1.0))]
fn rbf_kernel(x1: Vec<Vec<f64>>, x2: Vec<Vec<f64>>, lengthscale: f64, variance: f64) -> PyResult<Vec<Vec<f64>>> {
    let a = tensor(x1)?;
    let k = Kernel::rbf(a.cols(), lengthscale, variance);
    Ok(rows(&k.eval_tensor(&a, &tensor(x2)?).map_err(err)?))
}

/// `log N(y | 0, K + diag(sigma²))` under an RBF kernel.
#[pyfunction]
#[pyo3(signature = (x, y, sigma, lengthscale = 1.0, variance = 1.0))]
fn exact_log_marginal(x: Vec<Vec<f64>>, y: Vec<f64>, sigma: Vec<f64>, lengthscale: f64, variance: f64) -> PyResult<f64> {
    let d = dataset(x, y, sigma)?;
    let k = Kernel::rbf(d.x.cols(), lengthscale, variance);
    sparse_gp::exact_log_marginal(&d, &k, 0).map_err(err)
}

/// Collapsed sparse bound with inducing inputs `u` under an RBF kernel.
#[pyfunction]
#[pyo3(signature = (x, y, sigma, u, lengthscale = 1.0, variance = 1.0))]
fn titsias_elbo(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    sigma: Vec<f64>,
    u: Vec<Vec<f64>>,
    lengthscale: f64,
    variance: f64,
) -> PyResult<f64> {
    let d = dataset(x, y, sigma)?;
    let k = Kernel::rbf(d.x.cols(), lengthscale, variance);
    let u = InducingPoints::new(tensor(u)?).map_err(err)?;
    sparse_gp::titsias_elbo(&d, &u, &k, 0).map_err(err)
}

/// Sparse predictive mean and covariance at `x_star` from the optimal
/// inducing posterior.
#[pyfunction]
#[pyo3(signature = (x, y, sigma, u, x_star, lengthscale = 1.0, variance = 1.0))]
fn sparse_predict(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    sigma: Vec<f64>,
    u: Vec<Vec<f64>>,
    x_star: Vec<Vec<f64>>,
    lengthscale: f64,
    variance: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = dataset(x, y, sigma)?;
    let k = Kernel::rbf(d.x.cols(), lengthscale, variance);
    let u = InducingPoints::new(tensor(u)?).map_err(err)?;
    let post = sparse_gp::titsias_optimal(&d, &u, &k).map_err(err)?;
    let p = sparse_gp::sparse_predict(&post, &k, &tensor(x_star)?).map_err(err)?;
    Ok((p.mean.col_vec(0), rows(&p.cov[0])))
}

/// `count` moving-ball videos as `(frames, trajectory)` pairs.
#[pyfunction]
#[pyo3(signature = (seed, count))]
fn moving_ball(seed: u64, count: usize) -> PyResult<Vec<(Rows, Rows)>> {
    let v = generate_moving_ball(seed, count, &BallConfig::default()).map_err(err)?;
    Ok(v.iter().map(|v| (rows(&v.frames), rows(&v.trajectory))).collect())
}

/// Finite-difference checks of every objective on seeded toy problems.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn gradient_check<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &tr::gradient_check_all(seed).map_err(err)?)
}

/// Encoder-gradient magnitudes of the free-posterior and sparse bounds.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn vanishing_phi<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &tr::vanishing_phi(seed).map_err(err)?)
}

#[pymodule]
fn svgpvae_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(rbf_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(exact_log_marginal, m)?)?;
    m.add_function(wrap_pyfunction!(titsias_elbo, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_predict, m)?)?;
    m.add_function(wrap_pyfunction!(moving_ball, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(vanishing_phi, m)?)?;
    Ok(())
}

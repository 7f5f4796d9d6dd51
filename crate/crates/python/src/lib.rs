//! Python bindings: the numeric building blocks as functions, plus `Config`
//! and `Store` classes for training and obfuscating.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gesture_obfuscation as go;
use go::data::{write_csv, CsvSchema, Dataset, GestureSeries, SplitTag};
use go::noise::{NoiseConfig, ScaleRule};
use go::pipeline::{evaluate_config, ModelStore, ObfuscationConfig};

fn py_err(e: go::Error) -> PyErr {
    match e {
        go::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_scale(s: &str) -> PyResult<ScaleRule> {
    s.parse().map_err(py_err)
}

#[pyfunction]
fn dtw_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    go::dtw_distance(&a, &b).map_err(py_err)
}

#[pyfunction]
fn box_cox(y: Vec<f64>, lmbda: f64) -> PyResult<Vec<f64>> {
    go::box_cox(&y, lmbda).map_err(py_err)
}

#[pyfunction]
fn inverse_box_cox(z: Vec<f64>, lmbda: f64) -> PyResult<Vec<f64>> {
    go::inverse_box_cox(&z, lmbda).map_err(py_err)
}

#[pyfunction]
fn select_lambda(y: Vec<f64>) -> PyResult<f64> {
    go::select_lambda(&y).map_err(py_err)
}

#[pyfunction]
fn adf_test<'py>(py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let r = go::adf_test(&x).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("statistic", r.statistic)?;
    d.set_item("critical_value_5pct", r.critical_value_5pct)?;
    d.set_item("lags", r.lags)?;
    d.set_item("nobs", r.nobs)?;
    d.set_item("stationary", r.stationary)?;
    Ok(d)
}

/// Returns `(values, lambda, shift, applied)`.
#[pyfunction]
fn stabilize(x: Vec<f64>) -> PyResult<(Vec<f64>, f64, f64, bool)> {
    let (z, p) = go::stabilize(&x).map_err(py_err)?;
    Ok((z, p.lambda, p.shift, p.applied))
}

#[pyfunction]
fn autocorr(x: Vec<f64>, max_lag: usize) -> PyResult<Vec<f64>> {
    go::autocorr(&x, max_lag).map_err(py_err)
}

#[pyfunction]
fn lp_coefficients(r: Vec<f64>, order: usize) -> PyResult<Vec<f64>> {
    go::lp_coefficients(&r, order)
        .map(|f| f.coefficients)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (forecast, scale = "2std", tau = 0.5, max_order = 8, max_retries = 50, seed = 0))]
fn correlated_noise<'py>(
    py: Python<'py>,
    forecast: Vec<f64>,
    scale: &str,
    tau: f64,
    max_order: usize,
    max_retries: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = NoiseConfig {
        scale_rule: parse_scale(scale)?,
        tau,
        max_order,
        max_retries,
        seed,
    };
    cfg.validate().map_err(py_err)?;
    let out = go::generate_correlated_noise(&forecast, &cfg).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("noise", out.noise)?;
    d.set_item("achieved_correlation", out.achieved_correlation)?;
    d.set_item("order_used", out.order_used)?;
    d.set_item("draws", out.draws)?;
    d.set_item("sigma", out.sigma)?;
    d.set_item("status", format!("{:?}", out.status).to_lowercase())?;
    Ok(d)
}

#[pyfunction]
fn mae(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    go::metrics::mae(&a, &b).map_err(py_err)
}

#[pyfunction]
fn indistinguishability(
    target: Vec<f64>,
    population: Vec<Vec<f64>>,
    similarity_threshold: f64,
) -> PyResult<f64> {
    go::indistinguishability(&target, &population, similarity_threshold).map_err(py_err)
}

/// Writes a labeled synthetic dataset as CSV.
#[pyfunction]
#[pyo3(signature = (path, users = 10, types = 4, reps = 20, sessions = 2, length = 64, noise = 0.02, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn synth_csv(
    path: PathBuf,
    users: usize,
    types: usize,
    reps: usize,
    sessions: usize,
    length: usize,
    noise: f64,
    seed: u64,
) -> PyResult<()> {
    let d = go::synth::generate(&go::synth::SynthConfig {
        users,
        types,
        reps,
        sessions,
        length,
        noise,
        seed,
    });
    let file = std::fs::File::create(&path)
        .map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
    write_csv(&d, file).map_err(py_err)
}

#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ObfuscationConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (
        noise_scale = "2std", corr_threshold = 0.5, max_order = 8, max_retries = 50, seed = 0,
        train_fraction = 0.8, percentile = 90.0, similarity_threshold = 0.1, parallelism = 0,
        clusters = None, public_model = false
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        noise_scale: &str,
        corr_threshold: f64,
        max_order: usize,
        max_retries: usize,
        seed: u64,
        train_fraction: f64,
        percentile: f64,
        similarity_threshold: f64,
        parallelism: usize,
        clusters: Option<usize>,
        public_model: bool,
    ) -> PyResult<Self> {
        let inner = ObfuscationConfig {
            noise: NoiseConfig {
                scale_rule: parse_scale(noise_scale)?,
                tau: corr_threshold,
                max_order,
                max_retries,
                seed,
            },
            train_fraction,
            percentile,
            similarity_threshold,
            parallelism,
            clusters,
            public_model,
        };
        inner.validate().map_err(py_err)?;
        Ok(PyConfig { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    fn __repr__(&self) -> String {
        format!("Config({})", self.to_json())
    }
}

fn config_or_default(cfg: Option<PyConfig>) -> ObfuscationConfig {
    cfg.map(|c| c.inner).unwrap_or_default()
}

#[pyclass(name = "Store")]
struct PyStore {
    inner: ModelStore,
}

#[pymethods]
impl PyStore {
    /// Ingests a CSV, preprocesses, splits and trains.
    #[staticmethod]
    #[pyo3(signature = (csv_path, name = "dataset", config = None))]
    fn train(
        py: Python<'_>,
        csv_path: PathBuf,
        name: &str,
        config: Option<PyConfig>,
    ) -> PyResult<Self> {
        let cfg = config_or_default(config);
        let inner = py.detach(|| {
            let raw = go::data::ingest_csv(&csv_path, &CsvSchema::default())?;
            go::train_from_raw(&raw, name, &cfg).map(|(store, _)| store)
        });
        Ok(PyStore {
            inner: inner.map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyStore {
            inner: go::load_store(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        go::save_store(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn dataset(&self) -> String {
        self.inner.dataset.clone()
    }

    #[getter]
    fn users(&self) -> Vec<String> {
        self.inner.users.keys().cloned().collect()
    }

    #[getter]
    fn forecast_model_count(&self) -> usize {
        self.inner.forecast_model_count()
    }

    #[getter]
    fn cluster_model_count(&self) -> usize {
        self.inner.cluster_model_count()
    }

    /// Obfuscates one raw gesture series; values come back in input units.
    #[pyo3(signature = (user, session, gesture, feature, values, config = None))]
    #[allow(clippy::too_many_arguments)]
    fn obfuscate<'py>(
        &self,
        py: Python<'py>,
        user: String,
        session: String,
        gesture: u64,
        feature: String,
        values: Vec<f64>,
        config: Option<PyConfig>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = config_or_default(config);
        let raw = Dataset {
            series: vec![GestureSeries {
                user_id: user,
                session_id: session,
                gesture_id: gesture,
                feature_name: feature.clone(),
                label: None,
                values,
            }],
            feature_names: vec![feature.clone()],
            split: SplitTag::Unsplit,
        };
        let prepared = self.inner.preprocess(&raw).map_err(py_err)?;
        let out = go::obfuscate_gesture(&prepared.series[0], &self.inner, &cfg).map_err(py_err)?;
        let extrema = self.inner.extrema.get(&feature);
        let unscale = |v: &[f64]| -> Vec<f64> {
            match extrema {
                Some(e) => v.iter().map(|&x| e.unscale(x)).collect(),
                None => v.to_vec(),
            }
        };
        let d = PyDict::new(py);
        d.set_item("values", unscale(&out.series.values))?;
        d.set_item("forecast", unscale(&out.forecast))?;
        d.set_item("normalized_values", out.series.values)?;
        d.set_item("normalized_forecast", out.forecast)?;
        d.set_item("normalized_noise", out.noise)?;
        d.set_item("cluster", out.diagnostics.cluster)?;
        d.set_item("model_kind", out.diagnostics.model_kind.name())?;
        d.set_item("order_used", out.diagnostics.order_used)?;
        d.set_item("achieved_correlation", out.diagnostics.achieved_correlation)?;
        d.set_item(
            "noise_status",
            format!("{:?}", out.diagnostics.noise_status).to_lowercase(),
        )?;
        Ok(d)
    }

    /// Evaluates one setting on the held-out split; returns the report as JSON.
    #[pyo3(signature = (config = None, label = "run"))]
    fn evaluate(&self, py: Python<'_>, config: Option<PyConfig>, label: &str) -> PyResult<String> {
        let cfg = config_or_default(config);
        let holdout = self
            .inner
            .holdout
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("store has no held-out split"))?;
        let report = py
            .detach(|| evaluate_config(holdout, &self.inner, label, &cfg))
            .map_err(py_err)?
            .0;
        serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

#[pymodule]
fn gesture_obf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(dtw_distance, m)?)?;
    m.add_function(wrap_pyfunction!(box_cox, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_box_cox, m)?)?;
    m.add_function(wrap_pyfunction!(select_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(adf_test, m)?)?;
    m.add_function(wrap_pyfunction!(stabilize, m)?)?;
    m.add_function(wrap_pyfunction!(autocorr, m)?)?;
    m.add_function(wrap_pyfunction!(lp_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(correlated_noise, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(indistinguishability, m)?)?;
    m.add_function(wrap_pyfunction!(synth_csv, m)?)?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyStore>()?;
    Ok(())
}

//! Python bindings. Arrays cross the boundary as nested lists; settings are
//! passed as text in the same sectioned format the CLI reads.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use jse_core::config::parse_experiment_config;
use jse_core::error::Error;
use jse_core::eval::{self, ExperimentConfig, Method};
use jse_core::io;
use jse_core::jse::{jse_transform, TransformMode};
use jse_core::toy::{self, ToyConfig};
use jse_core::types::{LabeledEmbeddings, SubspaceResult};
use ndarray::Array2;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Numerical(_) | Error::NotOrthonormal(_) => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn settings(text: Option<&str>) -> PyResult<ExperimentConfig> {
    parse_experiment_config(text.unwrap_or("")).map_err(py_err)
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn to_columns(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.columns().into_iter().map(|c| c.to_vec()).collect()
}

/// Embeddings with main-task and spurious labels.
#[pyclass(name = "Dataset", module = "jse", frozen)]
struct PyDataset(LabeledEmbeddings);

#[pymethods]
impl PyDataset {
    #[new]
    fn new(z: Vec<Vec<f64>>, y_mt: Vec<u8>, y_sp: Vec<u8>) -> PyResult<Self> {
        let d = z.first().map_or(0, Vec::len);
        if z.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err("rows of z must have equal length"));
        }
        let flat: Vec<f64> = z.into_iter().flatten().collect();
        let z = Array2::from_shape_vec((flat.len() / d.max(1), d), flat)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        LabeledEmbeddings::new(z, y_mt, y_sp).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        io::load_embeddings(&path).map(Self).map_err(py_err)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        io::save_embeddings(&path, &self.0).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        to_rows(self.0.z())
    }

    #[getter]
    fn y_mt(&self) -> Vec<u8> {
        self.0.y_mt().to_vec()
    }

    #[getter]
    fn y_sp(&self) -> Vec<u8> {
        self.0.y_sp().to_vec()
    }

    fn group_counts(&self) -> [usize; 4] {
        self.0.group_counts()
    }

    fn __len__(&self) -> usize {
        self.0.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, dim={})", self.0.n(), self.0.dim())
    }
}

/// Synthetic train/val/test splits.
#[pyfunction]
#[pyo3(signature = (rho, n=2000, d=20, gamma_sp=3.0, gamma_mt=3.0, angle_deg=90.0, seed=0))]
fn gen_toy(
    rho: f64,
    n: usize,
    d: usize,
    gamma_sp: f64,
    gamma_mt: f64,
    angle_deg: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset, PyDataset)> {
    let cfg = ToyConfig {
        rho,
        n,
        d,
        gamma_sp,
        gamma_mt,
        angle_deg,
        test_n: n,
        seed,
        ..ToyConfig::default()
    };
    let (train, val) = toy::gen_toy(&cfg).map_err(py_err)?;
    let test = toy::gen_toy_test(&cfg).map_err(py_err)?;
    Ok((PyDataset(train), PyDataset(val), PyDataset(test)))
}

/// Estimated spurious and main-task bases.
#[pyclass(name = "Subspaces", module = "jse", frozen)]
struct PySubspaces(SubspaceResult);

#[pymethods]
impl PySubspaces {
    #[getter]
    fn d_sp(&self) -> usize {
        self.0.d_sp()
    }

    #[getter]
    fn d_mt(&self) -> usize {
        self.0.d_mt()
    }

    /// Basis vectors of the spurious subspace.
    #[getter]
    fn sp_basis(&self) -> Vec<Vec<f64>> {
        to_columns(self.0.sp_basis.matrix())
    }

    #[getter]
    fn mt_basis(&self) -> Vec<Vec<f64>> {
        to_columns(self.0.mt_basis.matrix())
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }

    /// Removes the spurious subspace (`mode="remove-sp"`) or keeps only the
    /// main-task subspace (`mode="keep-mt"`).
    #[pyo3(signature = (data, mode="remove-sp"))]
    fn transform(&self, data: &PyDataset, mode: &str) -> PyResult<PyDataset> {
        let mode = match mode {
            "remove-sp" => TransformMode::RemoveSp,
            "keep-mt" => TransformMode::KeepMt,
            other => return Err(PyValueError::new_err(format!("unknown mode '{other}'"))),
        };
        let z = jse_transform(data.0.z(), &self.0, mode).map_err(py_err)?;
        data.0.with_embeddings(z).map(PyDataset).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Subspaces(d_sp={}, d_mt={})", self.0.d_sp(), self.0.d_mt())
    }
}

/// Runs joint subspace estimation. `config` uses the `[jse]` and
/// `[jse.optimizer]` sections of the configuration format.
#[pyfunction]
#[pyo3(signature = (train, val, config=None, seed=0))]
fn jse_fit(
    py: Python<'_>,
    train: &PyDataset,
    val: &PyDataset,
    config: Option<&str>,
    seed: u64,
) -> PyResult<PySubspaces> {
    let mut cfg = settings(config)?.configs.jse;
    cfg.optimizer.seed = seed;
    let (tr, va) = (&train.0, &val.0);
    py.detach(|| jse_core::jse::jse_fit(tr, va, &cfg))
        .map(PySubspaces)
        .map_err(py_err)
}

/// A method fitted end to end: transform followed by a linear classifier.
#[pyclass(name = "FittedMethod", module = "jse", frozen)]
struct PyFitted(eval::FittedMethod);

#[pymethods]
impl PyFitted {
    #[getter]
    fn method(&self) -> &'static str {
        self.0.method.name()
    }

    #[getter]
    fn d_sp_hat(&self) -> Option<usize> {
        self.0.d_sp_hat
    }

    #[getter]
    fn d_mt_hat(&self) -> Option<usize> {
        self.0.d_mt_hat
    }

    /// Classifier weights and intercept.
    #[getter]
    fn weights(&self) -> (Vec<f64>, f64) {
        (self.0.model.w.clone(), self.0.model.b)
    }

    /// Accuracies in percent: `(group_acc, worst_group, average, macro_average)`.
    fn evaluate(&self, test: &PyDataset) -> PyResult<([f64; 4], f64, f64, f64)> {
        let s = self.0.evaluate(&test.0).map_err(py_err)?;
        Ok((s.group_acc, s.worst_group, s.average, s.macro_average))
    }
}

/// Fits one of `jse`, `erm`, `gw-erm`, `inlp`, `rlace`.
#[pyfunction]
#[pyo3(signature = (method, train, val, config=None, seed=0))]
fn fit_method(
    py: Python<'_>,
    method: &str,
    train: &PyDataset,
    val: &PyDataset,
    config: Option<&str>,
    seed: u64,
) -> PyResult<PyFitted> {
    let method: Method = method.parse().map_err(py_err)?;
    let cfgs = settings(config)?.configs;
    let (tr, va) = (&train.0, &val.0);
    py.detach(|| eval::fit_method(method, tr, va, &cfgs, seed))
        .map(PyFitted)
        .map_err(py_err)
}

/// Runs a configured sweep and returns its results CSV as text.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn sweep(py: Python<'_>, config: Option<&str>) -> PyResult<String> {
    let cfg = settings(config)?;
    let result = py.detach(|| eval::run_sweep(&cfg)).map_err(py_err)?;
    let mut out = Vec::new();
    eval::write_results_csv(&result.records, &mut out).map_err(py_err)?;
    String::from_utf8(out).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn jse(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PySubspaces>()?;
    m.add_class::<PyFitted>()?;
    m.add_function(wrap_pyfunction!(gen_toy, m)?)?;
    m.add_function(wrap_pyfunction!(jse_fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_method, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}

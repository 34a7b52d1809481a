//! Python bindings: subjects, registration, features, statistics,
//! classification and the evaluation protocol.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use qcosa::classifier::ThresholdModel;
use qcosa::error::Error;
use qcosa::evaluation::{confusion_metrics, run_baseline, run_protocol, ProtocolConfig};
use qcosa::features::{deformation_index, MixWeights, DEFAULT_WINDOW};
use qcosa::image::ImageGray;
use qcosa::io::{load_subject, write_phantom, DatasetManifest};
use qcosa::landmarks::{Label, Landmark, LandmarkSet, SubjectRecord, LANDMARK_COUNT};
use qcosa::phantom::PhantomSpec;
use qcosa::pipeline::SubjectFeatures;
use qcosa::registration::{register, RegParams};

create_exception!(qcosa, QcosaError, PyException);

fn py_err(e: Error) -> PyErr {
    QcosaError::new_err(format!("[{}] {e}", e.category()))
}

fn parse_label(s: Option<&str>) -> PyResult<Option<Label>> {
    s.map(|s| s.parse().map_err(py_err)).transpose()
}

fn parse_labels(labels: Vec<String>) -> PyResult<Vec<Label>> {
    labels.iter().map(|s| s.parse().map_err(py_err)).collect()
}

/// A grayscale image with its eighteen landmarks and an optional label.
#[pyclass(name = "Subject", module = "qcosa", frozen, from_py_object)]
#[derive(Clone)]
pub struct PySubject {
    inner: SubjectRecord,
}

#[pymethods]
impl PySubject {
    /// `pixels` is row-major with `width * height` values; `landmarks` holds
    /// `(x, y)` pairs in schema order.
    #[new]
    #[pyo3(signature = (id, width, height, pixels, landmarks, label=None))]
    fn new(
        id: String,
        width: usize,
        height: usize,
        pixels: Vec<f64>,
        landmarks: Vec<(f64, f64)>,
        label: Option<&str>,
    ) -> PyResult<Self> {
        if landmarks.len() != LANDMARK_COUNT {
            return Err(py_err(Error::InvalidInput(format!(
                "expected {LANDMARK_COUNT} landmarks, got {}",
                landmarks.len()
            ))));
        }
        let mut positions = [Complex64::new(0.0, 0.0); LANDMARK_COUNT];
        for (p, &(x, y)) in positions.iter_mut().zip(&landmarks) {
            *p = Complex64::new(x, y);
        }
        let image = ImageGray::new(width, height, pixels).map_err(py_err)?;
        let lm = LandmarkSet::new(positions).map_err(py_err)?;
        let inner = SubjectRecord::new(id, image, lm, parse_label(label)?).map_err(py_err)?;
        Ok(PySubject { inner })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn label(&self) -> Option<&'static str> {
        self.inner.label.map(Label::as_str)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.image.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.image.height()
    }

    #[getter]
    fn pixels(&self) -> Vec<f64> {
        self.inner.image.data().to_vec()
    }

    /// `{name: (x, y)}` for all eighteen landmarks.
    #[getter]
    fn landmarks(&self) -> Vec<(&'static str, (f64, f64))> {
        self.inner.landmarks.iter().map(|(l, p)| (l.name(), (p.re, p.im))).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Subject(id={:?}, label={:?}, size={}x{})",
            self.inner.id,
            self.label(),
            self.width(),
            self.height()
        )
    }
}

fn records(subjects: &[PySubject]) -> Vec<SubjectRecord> {
    subjects.iter().map(|s| s.inner.clone()).collect()
}

#[pyfunction]
#[pyo3(signature = (id, image, landmarks, label=None))]
fn load(id: &str, image: PathBuf, landmarks: PathBuf, label: Option<&str>) -> PyResult<PySubject> {
    let inner = load_subject(id, &image, &landmarks, parse_label(label)?).map_err(py_err)?;
    Ok(PySubject { inner })
}

#[pyfunction]
fn load_manifest(path: PathBuf) -> PyResult<Vec<PySubject>> {
    let m = DatasetManifest::load(&path).map_err(py_err)?;
    let subjects = m.load_subjects().map_err(py_err)?;
    Ok(subjects.into_iter().map(|inner| PySubject { inner }).collect())
}

/// Synthetic cohort; keyword arguments override the default phantom settings.
/// Returns `(base, subjects)`. With `out`, the cohort is also written there.
#[pyfunction]
#[pyo3(signature = (per_class=30, seed=7, width=65, height=65, warp_amplitude=None, noise=None, out=None))]
fn phantom(
    per_class: usize,
    seed: u64,
    width: usize,
    height: usize,
    warp_amplitude: Option<f64>,
    noise: Option<f64>,
    out: Option<PathBuf>,
) -> PyResult<(PySubject, Vec<PySubject>)> {
    let d = PhantomSpec::default();
    let spec = PhantomSpec {
        per_class,
        seed,
        width,
        height,
        warp_amplitude: warp_amplitude.unwrap_or(d.warp_amplitude),
        noise: noise.unwrap_or(d.noise),
        ..d
    };
    let cohort = spec.generate().map_err(py_err)?;
    if let Some(dir) = out {
        write_phantom(&dir, &spec, &cohort).map_err(py_err)?;
    }
    Ok((
        PySubject { inner: cohort.base },
        cohort.subjects.into_iter().map(|inner| PySubject { inner }).collect(),
    ))
}

/// Outcome of registering a reference onto a subject.
#[pyclass(name = "Registration", module = "qcosa", frozen, get_all)]
pub struct PyRegistration {
    /// Image of every reference grid vertex, row-major.
    map: Vec<Complex64>,
    /// Beltrami coefficient averaged onto the vertices.
    mu: Vec<Complex64>,
    energy_trace: Vec<f64>,
    landmark_residual: f64,
    accepted_steps: usize,
}

#[pyfunction]
#[pyo3(signature = (reference, subject, outer_iters=None))]
fn register_subjects(
    reference: &PySubject,
    subject: &PySubject,
    outer_iters: Option<usize>,
) -> PyResult<PyRegistration> {
    let mut params = RegParams::default();
    if let Some(n) = outer_iters {
        params.outer_iters = n;
    }
    let (r, s) = (&reference.inner, &subject.inner);
    let res = register(&r.image, &s.image, r.landmarks.positions(), s.landmarks.positions(), &params)
        .map_err(py_err)?;
    Ok(PyRegistration {
        map: res.map.targets().to_vec(),
        mu: res.mu.to_vertices().values().to_vec(),
        energy_trace: res.energy_trace,
        landmark_residual: res.landmark_residual,
        accepted_steps: res.accepted_steps,
    })
}

/// Window values of mu around the reference landmarks and the subject's
/// three raw airway distances.
#[pyfunction]
#[pyo3(signature = (reference, subject, window=DEFAULT_WINDOW))]
fn extract_features(
    reference: &PySubject,
    subject: &PySubject,
    window: usize,
) -> PyResult<(Vec<Complex64>, [f64; 3])> {
    let f = SubjectFeatures::extract(&reference.inner, &subject.inner, &RegParams::default(), window)
        .map_err(py_err)?;
    Ok((f.windows, f.distances))
}

#[pyfunction]
#[pyo3(name = "deformation_index")]
fn py_deformation_index(mu: Complex64, alpha: f64, beta: f64) -> PyResult<f64> {
    Ok(deformation_index(mu, MixWeights::new(alpha, beta).map_err(py_err)?))
}

/// `(t, df, p)` of the two-sided Welch test.
#[pyfunction]
fn welch_t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let w = qcosa::stats::welch_t_test(&a, &b).map_err(py_err)?;
    Ok((w.t, w.df, w.p))
}

#[pyfunction]
fn bagged_p_values(rows: Vec<Vec<f64>>, labels: Vec<String>) -> PyResult<Vec<f64>> {
    qcosa::select::bagged_p_values(&rows, &parse_labels(labels)?).map_err(py_err)
}

#[pyfunction]
fn select_top_k(p_values: Vec<f64>, k: usize) -> PyResult<Vec<usize>> {
    Ok(qcosa::select::select_top_k(&p_values, k).map_err(py_err)?.selected_indices)
}

#[pyfunction]
fn candidate_weights(rho: f64) -> PyResult<Vec<(f64, f64)>> {
    let c = qcosa::sweep::candidate_weights(rho).map_err(py_err)?;
    Ok(c.iter().map(|w| (w.alpha(), w.beta())).collect())
}

/// `(sensitivity, specificity, accuracy)` with OSA positive.
#[pyfunction]
#[pyo3(name = "confusion_metrics")]
fn py_confusion_metrics(predictions: Vec<String>, labels: Vec<String>) -> PyResult<(f64, f64, f64)> {
    confusion_metrics(&parse_labels(predictions)?, &parse_labels(labels)?).map_err(py_err)
}

/// Nearest-control-mean threshold classifier.
#[pyclass(name = "ThresholdModel", module = "qcosa", frozen)]
pub struct PyThresholdModel {
    inner: ThresholdModel,
}

#[pymethods]
impl PyThresholdModel {
    #[staticmethod]
    fn train(rows: Vec<Vec<f64>>, labels: Vec<String>) -> PyResult<Self> {
        let inner = ThresholdModel::train(&rows, &parse_labels(labels)?).map_err(py_err)?;
        Ok(PyThresholdModel { inner })
    }

    #[getter]
    fn c_mean(&self) -> Vec<f64> {
        self.inner.c_mean.clone()
    }

    #[getter]
    fn d_opt(&self) -> f64 {
        self.inner.d_opt
    }

    /// `(label, distance)` of one feature row.
    fn predict(&self, row: Vec<f64>) -> PyResult<(&'static str, f64)> {
        let d = self.inner.distance(&row).map_err(py_err)?;
        Ok((self.inner.classify_distance(d).as_str(), d))
    }
}

fn protocol(n_tests: usize, k: usize, rho: f64, folds: usize, window: usize, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        n_tests,
        k,
        rho,
        folds,
        window,
        seed,
        ..ProtocolConfig::default()
    }
}

/// Run the repeated split protocol; returns the report as TOML text.
#[pyfunction]
#[pyo3(signature = (subjects, n_tests=100, k=500, rho=0.05, folds=10, window=DEFAULT_WINDOW, seed=0))]
fn evaluate(
    py: Python<'_>,
    subjects: Vec<PySubject>,
    n_tests: usize,
    k: usize,
    rho: f64,
    folds: usize,
    window: usize,
    seed: u64,
) -> PyResult<String> {
    let db = records(&subjects);
    let config = protocol(n_tests, k, rho, folds, window, seed);
    py.detach(|| run_protocol(&db, &config).and_then(|r| r.to_toml()))
        .map_err(py_err)
}

/// The conventional-measurement SVM on the same splits; TOML report.
#[pyfunction]
#[pyo3(signature = (subjects, n_tests=100, folds=10, seed=0))]
fn baseline(py: Python<'_>, subjects: Vec<PySubject>, n_tests: usize, folds: usize, seed: u64) -> PyResult<String> {
    let db = records(&subjects);
    let config = protocol(n_tests, 1, 0.05, folds, DEFAULT_WINDOW, seed);
    py.detach(|| run_baseline(&db, &config).and_then(|r| r.to_toml()))
        .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "qcosa")]
fn qcosa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QcosaError", m.py().get_type::<QcosaError>())?;
    m.add(
        "LANDMARKS",
        Landmark::ALL.iter().map(|l| l.name()).collect::<Vec<_>>(),
    )?;
    m.add_class::<PySubject>()?;
    m.add_class::<PyRegistration>()?;
    m.add_class::<PyThresholdModel>()?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(load_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(phantom, m)?)?;
    m.add_function(wrap_pyfunction!(register_subjects, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(py_deformation_index, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(bagged_p_values, m)?)?;
    m.add_function(wrap_pyfunction!(select_top_k, m)?)?;
    m.add_function(wrap_pyfunction!(candidate_weights, m)?)?;
    m.add_function(wrap_pyfunction!(py_confusion_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    Ok(())
}

//! Python bindings for `migate`.
//!
//! Signals and feature matrices cross the boundary as nested lists;
//! configurations and reports as JSON strings.

use std::fmt::Display;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use migate_core::classifiers::{fit_classifier, ClassifierConfig, ClassifierError, ClassifierModel};
use migate_core::dataset::{
    load_recording, save_recording, synthesize_recording, ChannelKind, Recording, SynthSpec, TrialSet,
};
use migate_core::dsp::{
    band_power as core_band_power, design_butterworth_bandpass, filter_zero_phase, welch_psd as core_welch,
};
use migate_core::dsp::{BandSpec, FilterCoefficients, Psd};
use migate_core::ica::{fast_ica as core_fast_ica, remove_components, IcaModel};
use migate_core::pipeline::{
    bandpass_recording, evaluate_dispatch, held_out, prepare_subject, results_table as core_results_table,
    train_pipeline, DispatchPipeline, EvaluationReport, MiTaskConfig, PipelineConfig, PipelineError, PreprocessConfig,
    SubjectInput,
};

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Classifier(ClassifierError::NonFiniteLoss { .. }) => PyRuntimeError::new_err(e.to_string()),
        e => value_err(e),
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(value_err)
}

fn to_rows(a: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_json<T: serde::de::DeserializeOwned>(text: Option<&str>, what: &str) -> PyResult<Option<T>> {
    text.map(|t| serde_json::from_str(t).map_err(|e| PyValueError::new_err(format!("{what}: {e}"))))
        .transpose()
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(value_err)
}

/// A continuous multichannel recording with cue events.
#[pyclass(name = "Recording", frozen, from_py_object)]
#[derive(Clone)]
struct PyRecording {
    inner: Recording,
}

#[pymethods]
impl PyRecording {
    /// Load from a header path.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_recording(path).map_err(value_err)?,
        })
    }

    /// Generate a synthetic recording from a JSON spec.
    #[staticmethod]
    #[pyo3(signature = (spec, seed=0))]
    fn synthesize(spec: &str, seed: u64) -> PyResult<Self> {
        let spec: SynthSpec = serde_json::from_str(spec).map_err(value_err)?;
        Ok(Self {
            inner: synthesize_recording(&spec, seed).map_err(value_err)?,
        })
    }

    /// Write header and sample file into `dir`; returns the header path.
    fn save(&self, dir: &str, name: &str) -> PyResult<String> {
        let path = save_recording(&self.inner, dir, name).map_err(value_err)?;
        Ok(path.display().to_string())
    }

    /// Zero-phase Butterworth band-pass of every channel.
    #[pyo3(signature = (order=4, low_hz=2.0, high_hz=60.0))]
    fn bandpass(&self, order: usize, low_hz: f64, high_hz: f64) -> PyResult<Self> {
        let pre = PreprocessConfig {
            filter_order: order,
            band_hz: BandSpec { low_hz, high_hz },
            ..PreprocessConfig::default()
        };
        Ok(Self {
            inner: bandpass_recording(&self.inner, &pre).map_err(pipeline_err)?,
        })
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.inner.fs
    }

    #[getter]
    fn session(&self) -> String {
        self.inner.session.clone()
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn channel_names(&self) -> Vec<String> {
        self.inner.channels.iter().map(|c| c.name.clone()).collect()
    }

    /// Names of the EOG channels.
    #[getter]
    fn eog_channels(&self) -> Vec<String> {
        self.inner
            .channels
            .iter()
            .filter(|c| c.kind == ChannelKind::Eog)
            .map(|c| c.name.clone())
            .collect()
    }

    /// `(onset_sample, label)` pairs.
    #[getter]
    fn events(&self) -> Vec<(usize, i64)> {
        self.inner.events.iter().map(|e| (e.onset, e.label)).collect()
    }

    /// `[n_samples][n_channels]`
    fn samples(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.samples.view())
    }

    fn __repr__(&self) -> String {
        format!(
            "Recording(session={:?}, fs={}, channels={}, samples={}, events={})",
            self.inner.session,
            self.inner.fs,
            self.inner.channels.len(),
            self.inner.n_samples(),
            self.inner.events.len()
        )
    }
}

/// Band-passed, epoched trials of one subject.
#[pyclass(name = "TrialSet", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTrialSet {
    inner: TrialSet,
}

#[pymethods]
impl PyTrialSet {
    /// Filter and epoch the given sessions of one subject.
    #[staticmethod]
    #[pyo3(signature = (sessions, subject_id, preprocess=None))]
    fn prepare(sessions: Vec<PyRecording>, subject_id: i64, preprocess: Option<&str>) -> PyResult<Self> {
        let pre: PreprocessConfig = from_json(preprocess, "preprocess")?.unwrap_or_default();
        let recs: Vec<Recording> = sessions.into_iter().map(|r| r.inner).collect();
        Ok(Self {
            inner: prepare_subject(&recs, &pre, subject_id).map_err(pipeline_err)?,
        })
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.inner.fs
    }

    #[getter]
    fn subject_id(&self) -> i64 {
        self.inner.trials[0].subject_id
    }

    #[getter]
    fn window_len(&self) -> usize {
        self.inner.window_len()
    }

    #[getter]
    fn channel_names(&self) -> Vec<String> {
        self.inner.channels.iter().map(|c| c.name.clone()).collect()
    }

    fn labels(&self) -> Vec<u8> {
        self.inner.labels()
    }

    /// Samples of trial `i` as `[n_window_samples][n_channels]`.
    fn trial(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        let t = self
            .inner
            .trials
            .get(i)
            .ok_or_else(|| PyIndexError::new_err(format!("trial {i} out of range")))?;
        Ok(to_rows(t.data.view()))
    }

    /// Subset by trial index.
    fn select(&self, idx: Vec<usize>) -> PyResult<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.inner.len()) {
            return Err(PyIndexError::new_err(format!("trial {bad} out of range")));
        }
        Ok(Self {
            inner: self.inner.select(&idx).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TrialSet(subject={}, trials={}, window={}, channels={})",
            self.subject_id(),
            self.inner.len(),
            self.inner.window_len(),
            self.inner.channels.len()
        )
    }
}

/// Butterworth band-pass as second-order sections.
#[pyclass(name = "BandpassFilter", frozen)]
struct PyFilter {
    inner: FilterCoefficients,
    fs: f64,
}

#[pymethods]
impl PyFilter {
    #[new]
    fn new(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> PyResult<Self> {
        let inner = design_butterworth_bandpass(order, BandSpec { low_hz, high_hz }, fs).map_err(value_err)?;
        Ok(Self { inner, fs })
    }

    /// Complex response at `f_hz` as `(re, im)`.
    fn response(&self, f_hz: f64) -> (f64, f64) {
        let h = self.inner.response(f_hz, self.fs);
        (h.re, h.im)
    }

    fn gain_db(&self, f_hz: f64) -> f64 {
        20.0 * self.inner.response(f_hz, self.fs).norm().log10()
    }

    fn is_stable(&self) -> bool {
        self.inner.is_stable()
    }

    /// Forward-backward filtering of one signal.
    fn filtfilt(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        filter_zero_phase(&x, &self.inner).map_err(value_err)
    }
}

/// One-sided Welch PSD; returns `(freqs_hz, power)`.
#[pyfunction]
#[pyo3(signature = (x, fs, segment_s=1.0, overlap=0.5))]
fn welch_psd(x: Vec<f64>, fs: f64, segment_s: f64, overlap: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = core_welch(&x, fs, segment_s, overlap).map_err(value_err)?;
    Ok((p.freqs_hz, p.power))
}

/// Integrated PSD power over `[low_hz, high_hz]`.
#[pyfunction]
fn band_power(freqs_hz: Vec<f64>, power: Vec<f64>, low_hz: f64, high_hz: f64) -> PyResult<f64> {
    if freqs_hz.len() != power.len() {
        return Err(PyValueError::new_err("freqs_hz and power differ in length"));
    }
    core_band_power(&Psd { freqs_hz, power }, BandSpec { low_hz, high_hz }).map_err(value_err)
}

/// Fitted FastICA decomposition.
#[pyclass(name = "IcaModel", frozen)]
struct PyIcaModel {
    inner: IcaModel,
}

#[pymethods]
impl PyIcaModel {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn n_iter(&self) -> usize {
        self.inner.n_iter
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.inner.n_components()
    }

    /// `[n_channels][k]`
    fn mixing(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.mixing.view())
    }

    /// `[n_samples][k]` source activations.
    fn sources(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let s = self.inner.sources(to_array(x)?.view()).map_err(value_err)?;
        Ok(to_rows(s.view()))
    }

    /// Reconstruct `x` without the listed components.
    fn remove(&self, x: Vec<Vec<f64>>, drop: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        let y = remove_components(&self.inner, to_array(x)?.view(), &drop).map_err(value_err)?;
        Ok(to_rows(y.view()))
    }
}

/// FastICA on `[n_samples][n_channels]` data.
#[pyfunction]
#[pyo3(signature = (x, k, seed=0, tol=1e-4, max_iter=200))]
fn fast_ica(x: Vec<Vec<f64>>, k: usize, seed: u64, tol: f64, max_iter: usize) -> PyResult<PyIcaModel> {
    let inner = core_fast_ica(to_array(x)?.view(), k, seed, tol, max_iter).map_err(value_err)?;
    Ok(PyIcaModel { inner })
}

/// A fitted binary classifier.
#[pyclass(name = "Classifier", frozen)]
struct PyClassifier {
    inner: ClassifierModel,
}

#[pymethods]
impl PyClassifier {
    /// Fit on `x` `[n][d]` and 0/1 labels; `config` is a JSON classifier spec
    /// such as `{"kind": "lda"}`.
    #[staticmethod]
    #[pyo3(signature = (config, x, y, seed=0))]
    fn fit(config: &str, x: Vec<Vec<f64>>, y: Vec<u8>, seed: u64) -> PyResult<Self> {
        let cfg: ClassifierConfig = serde_json::from_str(config).map_err(value_err)?;
        let inner = fit_classifier(&cfg, to_array(x)?.view(), &y, seed).map_err(|e| match e {
            ClassifierError::NonFiniteLoss { .. } => PyRuntimeError::new_err(e.to_string()),
            e => value_err(e),
        })?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<u8>> {
        self.inner.predict_batch(to_array(x)?.view()).map_err(value_err)
    }
}

fn subject(t: &PyTrialSet, ica: bool, classifier: ClassifierConfig) -> SubjectInput<'_> {
    SubjectInput {
        id: t.subject_id(),
        trials: &t.inner,
        task: MiTaskConfig { ica, classifier },
    }
}

/// Subject gate plus one MI model per subject.
#[pyclass(name = "Pipeline", frozen)]
struct PyPipeline {
    inner: DispatchPipeline,
    config: PipelineConfig,
    report: EvaluationReport,
}

#[pymethods]
impl PyPipeline {
    /// Train on two subjects. `config`, `gate` and each entry of
    /// `classifiers` are JSON strings; `ica` toggles EOG removal per subject.
    #[staticmethod]
    #[pyo3(signature = (first, second, config=None, gate=None, classifiers=(None, None), ica=(true, false)))]
    fn train(
        first: &PyTrialSet,
        second: &PyTrialSet,
        config: Option<&str>,
        gate: Option<&str>,
        classifiers: (Option<String>, Option<String>),
        ica: (bool, bool),
    ) -> PyResult<Self> {
        let config: PipelineConfig = from_json(config, "config")?.unwrap_or_default();
        config.validate().map_err(pipeline_err)?;
        let gate: ClassifierConfig = from_json(gate, "gate")?.unwrap_or_else(ClassifierConfig::ensemble);
        let mi = [
            from_json(classifiers.0.as_deref(), "classifier")?.unwrap_or_else(ClassifierConfig::lda),
            from_json(classifiers.1.as_deref(), "classifier")?.unwrap_or_else(ClassifierConfig::lda),
        ];
        let fingerprint = migate_core::pipeline::config_fingerprint(&(&config, &gate, &mi, ica));
        let (inner, report) = train_pipeline(
            [subject(first, ica.0, mi[0]), subject(second, ica.1, mi[1])],
            &gate,
            &config,
            fingerprint,
        )
        .map_err(pipeline_err)?;
        Ok(Self { inner, config, report })
    }

    /// Load `pipeline.json` written by `migate train`.
    #[staticmethod]
    #[pyo3(signature = (models_dir, config=None))]
    fn load(models_dir: &str, config: Option<&str>) -> PyResult<Self> {
        let saved = migate_core::cli::load_pipeline(Path::new(models_dir)).map_err(|e| value_err(e.message))?;
        let config: PipelineConfig = from_json(config, "config")?.unwrap_or_default();
        Ok(Self {
            report: EvaluationReport {
                config_fingerprint: saved.config_fingerprint,
                seed: config.seed,
                tasks: Vec::new(),
                dispatch: None,
            },
            inner: saved.pipeline,
            config,
        })
    }

    /// Training report as JSON.
    #[getter]
    fn report(&self) -> PyResult<String> {
        to_json(&self.report)
    }

    #[getter]
    fn subject_ids(&self) -> (i64, i64) {
        (self.inner.gate.subject_ids[0], self.inner.gate.subject_ids[1])
    }

    /// Gate feature names followed by each MI model's.
    fn feature_names(&self) -> Vec<Vec<String>> {
        self.inner.feature_names()
    }

    /// Route the listed trials of `trials` as one run; returns
    /// `(gate_label, subject_id, mi_labels)`.
    fn dispatch(&self, trials: &PyTrialSet, idx: Vec<usize>) -> PyResult<(u8, i64, Vec<u8>)> {
        let run = trials.select(idx)?;
        let out = self
            .inner
            .dispatch_predict(run.inner.fs, &run.inner.channels, &run.inner.trials)
            .map_err(pipeline_err)?;
        Ok((out.gate_label, out.subject_id, out.mi_labels))
    }

    /// Dispatch runs from both subjects' held-out trials; returns the report
    /// as JSON.
    fn evaluate(&self, first: &PyTrialSet, second: &PyTrialSet) -> PyResult<String> {
        let ids = self.inner.gate.subject_ids;
        let tests = held_out([(&first.inner, ids[0]), (&second.inner, ids[1])], &self.config).map_err(pipeline_err)?;
        let report = evaluate_dispatch(&self.inner, [&tests[0], &tests[1]], self.config.seed).map_err(pipeline_err)?;
        to_json(&report)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }
}

/// Accuracy table over the fixed classifier set, rendered as text.
#[pyfunction]
#[pyo3(signature = (first, second, config=None, ica=(true, false)))]
fn results_table(first: &PyTrialSet, second: &PyTrialSet, config: Option<&str>, ica: (bool, bool)) -> PyResult<String> {
    let config: PipelineConfig = from_json(config, "config")?.unwrap_or_default();
    config.validate().map_err(pipeline_err)?;
    let table = core_results_table(
        [
            (&first.inner, first.subject_id(), ica.0),
            (&second.inner, second.subject_id(), ica.1),
        ],
        &config,
    )
    .map_err(pipeline_err)?;
    Ok(table.render())
}

/// Run the command-line tool with `args` (without the program name);
/// returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    migate_core::cli::run_from(std::iter::once("migate".to_string()).chain(args))
}

#[pymodule]
fn migate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRecording>()?;
    m.add_class::<PyTrialSet>()?;
    m.add_class::<PyFilter>()?;
    m.add_class::<PyIcaModel>()?;
    m.add_class::<PyClassifier>()?;
    m.add_class::<PyPipeline>()?;
    m.add_function(wrap_pyfunction!(welch_psd, m)?)?;
    m.add_function(wrap_pyfunction!(band_power, m)?)?;
    m.add_function(wrap_pyfunction!(fast_ica, m)?)?;
    m.add_function(wrap_pyfunction!(results_table, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}

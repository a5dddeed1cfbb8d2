//! Two-stage training and dispatch.
//!
//! Each subject gets its own motor-imagery model ([`MiBundle`]). A gate
//! classifier ([`GateBundle`]) learns to tell the subjects apart from the
//! same features; at test time a short run of trials is voted through the
//! gate and the winning subject's MI model labels every trial of the run.
//!
//! Every subject's trials are split once, with a seed derived from the run
//! seed and the subject id. The MI model trains on that subject's training
//! part, the gate on the union of both training parts, so the union of the
//! test parts is held out from every fitted object.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifiers::{fit_classifier, ClassifierConfig, ClassifierError, ClassifierModel};
use crate::dataset::{
    epoch_trials, split_indices, ChannelInfo, ChannelKind, DatasetError, LabelSemantics, Recording, Trial, TrialSet,
};
use crate::dsp::{design_butterworth_bandpass, filter_zero_phase, BandSpec, DspError};
use crate::features::{ExtractorConfig, FeatureError, FeatureExtractor, Standardizer};
use crate::ica::{
    fast_ica, remove_components, score_eog_correlation, ArtifactPolicy, EogScores, IcaError, IcaModel, IcaParams,
};
use crate::stats::binary_mode;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Ica(#[from] IcaError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("empty section")]
    EmptySection,
    #[error("section of {len} trials exceeds section size {max}")]
    SectionTooLarge { len: usize, max: usize },
    #[error("gate emitted label {0} with no MI model behind it")]
    UnknownSubjectLabel(u8),
    #[error("MI class {0} missing from trial set")]
    MissingClass(u8),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

// ---------------------------------------------------------------------------
// Configuration

fn default_order() -> usize {
    4
}
fn default_band() -> BandSpec {
    BandSpec::new(2.0, 60.0)
}
fn default_window() -> [f64; 2] {
    [0.5, 3.5]
}
fn default_fraction() -> f64 {
    0.8
}
fn default_section() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    #[serde(default = "default_order")]
    pub filter_order: usize,
    #[serde(default = "default_band")]
    pub band_hz: BandSpec,
    /// Epoch window relative to each cue, seconds.
    #[serde(default = "default_window")]
    pub epoch_window_s: [f64; 2],
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            filter_order: default_order(),
            band_hz: default_band(),
            epoch_window_s: default_window(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcaConfig {
    #[serde(default)]
    pub params: IcaParams,
    #[serde(default)]
    pub policy: ArtifactPolicy,
}

/// Settings shared by every task of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub ica: IcaConfig,
    #[serde(default)]
    pub features: ExtractorConfig,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_section")]
    pub section_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            ica: IcaConfig::default(),
            features: ExtractorConfig::default(),
            train_fraction: default_fraction(),
            section_size: default_section(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if self.section_size == 0 {
            return bad("section_size must be positive");
        }
        let [a, b] = self.preprocess.epoch_window_s;
        if !(b > a) {
            return bad("epoch window end must exceed start");
        }
        if !matches!(self.preprocess.filter_order, 2 | 4 | 6 | 8) {
            return bad("filter_order must be 2, 4, 6 or 8");
        }
        if !(self.ica.params.tol > 0.0 && self.ica.params.max_iter > 0) {
            return bad("ICA tol and max_iter must be positive");
        }
        Ok(())
    }
}

/// Per-subject MI task settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiTaskConfig {
    pub ica: bool,
    pub classifier: ClassifierConfig,
}

/// Split seed for one subject; MI and gate training share it.
pub fn subject_seed(seed: u64, subject_id: i64) -> u64 {
    seed ^ (subject_id as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn derived_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0xD134_2543_DE82_EF95).wrapping_add(salt)
}

/// Hex SHA-256 (first 16 characters) of the compact JSON form of `value`.
pub fn config_fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serialises");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(digest)[..16].to_string()
}

// ---------------------------------------------------------------------------
// Preprocessing

/// Zero-phase band-pass of every channel of a continuous recording.
pub fn bandpass_recording(rec: &Recording, pre: &PreprocessConfig) -> Result<Recording> {
    let coeffs = design_butterworth_bandpass(pre.filter_order, pre.band_hz, rec.fs)?;
    let mut out = Array2::zeros(rec.samples.dim());
    let mut buf = Vec::with_capacity(rec.n_samples());
    for (c, col) in rec.samples.columns().into_iter().enumerate() {
        buf.clear();
        buf.extend(col.iter().copied());
        let y = filter_zero_phase(&buf, &coeffs)?;
        out.column_mut(c).assign(&ndarray::ArrayView1::from(&y));
    }
    Ok(rec.with_samples(out)?)
}

/// Band-pass then epoch every session of one subject and pool the trials.
pub fn prepare_subject(sessions: &[Recording], pre: &PreprocessConfig, subject_id: i64) -> Result<TrialSet> {
    let mut sets = Vec::with_capacity(sessions.len());
    for rec in sessions {
        let filtered = bandpass_recording(rec, pre)?;
        sets.push(epoch_trials(
            &filtered,
            pre.epoch_window_s[0],
            pre.epoch_window_s[1],
            subject_id,
        )?);
    }
    Ok(TrialSet::concat(&sets)?)
}

/// The held-out part of a subject's trials under `cfg`'s seed.
pub fn split_subject(trials: &TrialSet, cfg: &PipelineConfig, subject_id: i64) -> Result<(Vec<usize>, Vec<usize>)> {
    Ok(split_indices(
        trials.len(),
        cfg.train_fraction,
        subject_seed(cfg.seed, subject_id),
    )?)
}

// ---------------------------------------------------------------------------
// EOG cleaning

/// FastICA fitted on training EEG with the components to drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EogCleaner {
    pub eeg_channels: Vec<usize>,
    pub eog_channels: Vec<usize>,
    pub model: IcaModel,
    pub scores: EogScores,
    pub dropped: Vec<usize>,
}

impl EogCleaner {
    pub fn fit(train: &TrialSet, cfg: &IcaConfig, seed: u64) -> Result<Self> {
        let eeg_channels = train.indices_of(ChannelKind::Eeg);
        let eog_channels = train.indices_of(ChannelKind::Eog);
        let eeg = train.stacked(&eeg_channels);
        let eog = train.stacked(&eog_channels);
        let model = fast_ica(
            eeg.view(),
            eeg_channels.len(),
            seed,
            cfg.params.tol,
            cfg.params.max_iter,
        )?;
        let names: Vec<String> = eog_channels.iter().map(|&i| train.channels[i].name.clone()).collect();
        let scores = score_eog_correlation(&model, eeg.view(), eog.view(), &names)?;
        let dropped = cfg.policy.select(&scores);
        Ok(Self {
            eeg_channels,
            eog_channels,
            model,
            scores,
            dropped,
        })
    }

    pub fn clean(&self, trial: &Trial) -> Result<Trial> {
        let eeg = trial.data.select(Axis(1), &self.eeg_channels);
        let cleaned = remove_components(&self.model, eeg.view(), &self.dropped)?;
        let mut out = trial.clone();
        for (j, &c) in self.eeg_channels.iter().enumerate() {
            out.data.column_mut(c).assign(&cleaned.column(j));
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Reports

/// Rows = true class, columns = predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion(pub [[u64; 2]; 2]);

impl Confusion {
    pub fn from_labels(truth: &[u8], pred: &[u8]) -> Self {
        let mut m = [[0u64; 2]; 2];
        for (&t, &p) in truth.iter().zip(pred) {
            m[t as usize][p as usize] += 1;
        }
        Self(m)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    /// Percent correct; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            100.0 * (self.0[0][0] + self.0[1][1]) as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionDecision {
    pub index: usize,
    pub true_label: u8,
    pub votes: Vec<u8>,
    pub decision: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionedResult {
    pub section_size: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub sections: Vec<SectionDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub classifier: String,
    pub n_train: usize,
    pub n_test: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_confusion: Confusion,
    pub test_confusion: Confusion,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sectioned: Option<SectionedResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ica_dropped: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ica_converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub subject_label: u8,
    pub gate_label: u8,
    pub n_trials: usize,
    pub mi_correct: usize,
    pub oracle_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchReport {
    pub run_size: usize,
    pub n_runs: usize,
    pub routing_accuracy: f64,
    pub end_to_end_accuracy: f64,
    pub oracle_gate_accuracy: f64,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_fingerprint: String,
    pub seed: u64,
    pub tasks: Vec<TaskReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dispatch: Option<DispatchReport>,
}

impl EvaluationReport {
    pub fn task(&self, name: &str) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.task == name)
    }
}

// ---------------------------------------------------------------------------
// MI models

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiBundle {
    pub subject_id: i64,
    pub cleaner: Option<EogCleaner>,
    pub extractor: FeatureExtractor,
    pub standardizer: Standardizer,
    pub model: ClassifierModel,
    pub meta: TrainingMeta,
}

impl MiBundle {
    pub fn feature_names(&self) -> Vec<String> {
        self.extractor.feature_names()
    }

    /// Raw extractor output (before standardisation) for `trials`.
    pub fn features(&self, fs: f64, channels: &[ChannelInfo], trials: &[Trial]) -> Result<Array2<f64>> {
        match &self.cleaner {
            Some(c) => {
                let cleaned = trials.iter().map(|t| c.clean(t)).collect::<Result<Vec<_>>>()?;
                Ok(self.extractor.transform_trials(fs, channels, &cleaned)?)
            }
            None => Ok(self.extractor.transform_trials(fs, channels, trials)?),
        }
    }

    pub fn predict(&self, fs: f64, channels: &[ChannelInfo], trials: &[Trial]) -> Result<Vec<u8>> {
        let x = self.standardizer.apply(self.features(fs, channels, trials)?.view())?;
        Ok(self.model.predict_batch(x.view())?)
    }
}

fn require_both_classes(ts: &TrialSet) -> Result<()> {
    for c in 0..2u8 {
        if !ts.trials.iter().any(|t| t.label == c) {
            return Err(PipelineError::MissingClass(c));
        }
    }
    Ok(())
}

/// Trains one subject's MI model on its training split and scores both splits.
pub fn train_mi(
    trials: &TrialSet,
    subject_id: i64,
    cfg: &PipelineConfig,
    task: &MiTaskConfig,
) -> Result<(MiBundle, TaskReport)> {
    cfg.validate()?;
    require_both_classes(trials)?;
    let (train_idx, test_idx) = split_subject(trials, cfg, subject_id)?;
    let train = trials.select(&train_idx)?;
    let test = trials.select(&test_idx)?;
    let seed = subject_seed(cfg.seed, subject_id);

    let cleaner = if task.ica {
        Some(EogCleaner::fit(&train, &cfg.ica, derived_seed(seed, 1))?)
    } else {
        None
    };
    let train_clean = match &cleaner {
        Some(c) => train.with_trials(train.trials.iter().map(|t| c.clean(t)).collect::<Result<_>>()?)?,
        None => train.clone(),
    };
    let extractor = FeatureExtractor::fit(&cfg.features, &train_clean)?;
    let x_train_raw = extractor.transform(&train_clean)?;
    let standardizer = Standardizer::fit(x_train_raw.x.view())?;
    let x_train = standardizer.apply(x_train_raw.x.view())?;
    let model = fit_classifier(&task.classifier, x_train.view(), &x_train_raw.y, derived_seed(seed, 2))?;

    let bundle = MiBundle {
        subject_id,
        cleaner,
        extractor,
        standardizer,
        model,
        meta: TrainingMeta {
            seed,
            train_fraction: cfg.train_fraction,
            train_indices: train_idx,
            test_indices: test_idx,
        },
    };
    let train_pred = bundle.model.predict_batch(x_train.view())?;
    let test_pred = bundle.predict(test.fs, &test.channels, &test.trials)?;
    let train_confusion = Confusion::from_labels(&train.labels(), &train_pred);
    let test_confusion = Confusion::from_labels(&test.labels(), &test_pred);
    let report = TaskReport {
        task: format!("mi-subject{subject_id}"),
        classifier: task.classifier.name().into(),
        n_train: train.len(),
        n_test: test.len(),
        train_accuracy: train_confusion.accuracy(),
        test_accuracy: test_confusion.accuracy(),
        train_confusion,
        test_confusion,
        sectioned: None,
        ica_dropped: bundle.cleaner.as_ref().map(|c| c.dropped.clone()),
        ica_converged: bundle.cleaner.as_ref().map(|c| c.model.converged),
    };
    Ok((bundle, report))
}

// ---------------------------------------------------------------------------
// Gate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateBundle {
    /// `subject_ids[label]` is the subject a gate label stands for.
    pub subject_ids: [i64; 2],
    pub extractor: FeatureExtractor,
    pub standardizer: Standardizer,
    pub model: ClassifierModel,
    pub section_size: usize,
}

impl GateBundle {
    pub fn feature_names(&self) -> Vec<String> {
        self.extractor.feature_names()
    }

    pub fn features(&self, fs: f64, channels: &[ChannelInfo], trials: &[Trial]) -> Result<Array2<f64>> {
        Ok(self.extractor.transform_trials(fs, channels, trials)?)
    }

    /// Per-trial gate labels for raw (unstandardised) feature rows.
    pub fn predict_rows(&self, features: ArrayView2<'_, f64>) -> Result<Vec<u8>> {
        let x = self.standardizer.apply(features)?;
        Ok(self.model.predict_batch(x.view())?)
    }

    /// Modal gate label over one section; ties go to 0.
    pub fn sectioned_predict(&self, section: ArrayView2<'_, f64>) -> Result<u8> {
        Ok(self.sectioned_votes(section)?.1)
    }

    fn sectioned_votes(&self, section: ArrayView2<'_, f64>) -> Result<(Vec<u8>, u8)> {
        if section.nrows() == 0 {
            return Err(PipelineError::EmptySection);
        }
        if section.nrows() > self.section_size {
            return Err(PipelineError::SectionTooLarge {
                len: section.nrows(),
                max: self.section_size,
            });
        }
        let votes = self.predict_rows(section)?;
        let decision = binary_mode(&votes);
        Ok((votes, decision))
    }
}

/// Relabels a subject's trials with its gate label.
fn as_subject(ts: &TrialSet, label: u8) -> Result<TrialSet> {
    let trials = ts.trials.iter().map(|t| Trial { label, ..t.clone() }).collect();
    Ok(TrialSet::new(
        ts.fs,
        ts.channels.clone(),
        trials,
        LabelSemantics::Subject,
    )?)
}

fn sectioned_eval(gate: &GateBundle, features: &[Array2<f64>; 2]) -> Result<SectionedResult> {
    let mut sections = Vec::new();
    let mut truth = Vec::new();
    let mut decided = Vec::new();
    for (label, x) in features.iter().enumerate() {
        let n = x.nrows();
        let mut start = 0;
        while start < n {
            let end = (start + gate.section_size).min(n);
            let (votes, decision) = gate.sectioned_votes(x.slice(ndarray::s![start..end, ..]))?;
            truth.push(label as u8);
            decided.push(decision);
            sections.push(SectionDecision {
                index: sections.len(),
                true_label: label as u8,
                votes,
                decision,
            });
            start = end;
        }
    }
    let confusion = Confusion::from_labels(&truth, &decided);
    Ok(SectionedResult {
        section_size: gate.section_size,
        accuracy: confusion.accuracy(),
        confusion,
        sections,
    })
}

/// Trains the subject-identity gate on both subjects' training splits.
///
/// Label 0 is `ids[0]` (first trial set), label 1 is `ids[1]`. Both subjects
/// pass through one extractor and one standardiser.
pub fn train_gate(
    trials: [&TrialSet; 2],
    ids: [i64; 2],
    cfg: &PipelineConfig,
    classifier: &ClassifierConfig,
) -> Result<(GateBundle, TaskReport)> {
    cfg.validate()?;
    if ids[0] == ids[1] {
        return Err(PipelineError::Config("gate needs two distinct subject ids".into()));
    }
    let mut train_parts = Vec::with_capacity(2);
    let mut test_parts = Vec::with_capacity(2);
    for (label, (ts, &id)) in trials.iter().zip(&ids).enumerate() {
        let (tr, te) = split_subject(ts, cfg, id)?;
        let relabeled = as_subject(ts, label as u8)?;
        train_parts.push(relabeled.select(&tr)?);
        test_parts.push(relabeled.select(&te)?);
    }
    let train = TrialSet::concat(&train_parts)?;
    let extractor = FeatureExtractor::fit(&cfg.features, &train)?;
    let x_raw = extractor.transform(&train)?;
    let standardizer = Standardizer::fit(x_raw.x.view())?;
    let x = standardizer.apply(x_raw.x.view())?;
    let seed = derived_seed(cfg.seed, 0x6a7e);
    let model = fit_classifier(classifier, x.view(), &x_raw.y, seed)?;
    let gate = GateBundle {
        subject_ids: ids,
        extractor,
        standardizer,
        model,
        section_size: cfg.section_size,
    };

    let train_pred = gate.model.predict_batch(x.view())?;
    let test_features = [
        gate.features(test_parts[0].fs, &test_parts[0].channels, &test_parts[0].trials)?,
        gate.features(test_parts[1].fs, &test_parts[1].channels, &test_parts[1].trials)?,
    ];
    let mut test_truth = Vec::new();
    let mut test_pred = Vec::new();
    for (label, f) in test_features.iter().enumerate() {
        test_truth.extend(std::iter::repeat_n(label as u8, f.nrows()));
        test_pred.extend(gate.predict_rows(f.view())?);
    }
    let sectioned = sectioned_eval(&gate, &test_features)?;
    let train_confusion = Confusion::from_labels(&x_raw.y, &train_pred);
    let test_confusion = Confusion::from_labels(&test_truth, &test_pred);
    let report = TaskReport {
        task: "x-subject".into(),
        classifier: classifier.name().into(),
        n_train: train.len(),
        n_test: test_truth.len(),
        train_accuracy: train_confusion.accuracy(),
        test_accuracy: test_confusion.accuracy(),
        train_confusion,
        test_confusion,
        sectioned: Some(sectioned),
        ica_dropped: None,
        ica_converged: None,
    };
    Ok((gate, report))
}

// ---------------------------------------------------------------------------
// Dispatch

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchPipeline {
    pub gate: GateBundle,
    pub mi: BTreeMap<i64, MiBundle>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchOutcome {
    pub gate_label: u8,
    pub subject_id: i64,
    pub mi_labels: Vec<u8>,
}

impl DispatchPipeline {
    pub fn new(gate: GateBundle, mi: Vec<MiBundle>) -> Result<Self> {
        let mi: BTreeMap<i64, MiBundle> = mi.into_iter().map(|b| (b.subject_id, b)).collect();
        for (label, id) in gate.subject_ids.iter().enumerate() {
            if !mi.contains_key(id) {
                return Err(PipelineError::UnknownSubjectLabel(label as u8));
            }
        }
        Ok(Self { gate, mi })
    }

    pub fn bundle_for_label(&self, label: u8) -> Result<&MiBundle> {
        let id = self
            .gate
            .subject_ids
            .get(label as usize)
            .ok_or(PipelineError::UnknownSubjectLabel(label))?;
        self.mi.get(id).ok_or(PipelineError::UnknownSubjectLabel(label))
    }

    /// Routes a run through the gate's modal vote, then labels every trial
    /// with the selected subject's MI model.
    pub fn dispatch_predict(&self, fs: f64, channels: &[ChannelInfo], run: &[Trial]) -> Result<DispatchOutcome> {
        if run.is_empty() {
            return Err(PipelineError::EmptySection);
        }
        let features = self.gate.features(fs, channels, run)?;
        let gate_label = self.gate.sectioned_predict(features.view())?;
        let bundle = self.bundle_for_label(gate_label)?;
        Ok(DispatchOutcome {
            gate_label,
            subject_id: bundle.subject_id,
            mi_labels: bundle.predict(fs, channels, run)?,
        })
    }

    /// Every feature-name list this pipeline was trained against.
    pub fn feature_names(&self) -> Vec<Vec<String>> {
        std::iter::once(self.gate.feature_names())
            .chain(self.mi.values().map(MiBundle::feature_names))
            .collect()
    }
}

/// Runs of `section_size` trials from each subject's held-out set (order
/// shuffled by `seed`, remainder kept as a short run) are dispatched. Also
/// reports the accuracy a perfect router would reach.
pub fn evaluate_dispatch(p: &DispatchPipeline, tests: [&TrialSet; 2], seed: u64) -> Result<DispatchReport> {
    let size = p.gate.section_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs = Vec::new();
    for (label, ts) in tests.iter().enumerate() {
        let label = label as u8;
        let own = p.bundle_for_label(label)?;
        let mut order: Vec<usize> = (0..ts.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(size) {
            let run: Vec<Trial> = chunk.iter().map(|&i| ts.trials[i].clone()).collect();
            let truth: Vec<u8> = run.iter().map(|t| t.label).collect();
            let out = p.dispatch_predict(ts.fs, &ts.channels, &run)?;
            let oracle = own.predict(ts.fs, &ts.channels, &run)?;
            let count = |pred: &[u8]| pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
            runs.push(RunRecord {
                subject_label: label,
                gate_label: out.gate_label,
                n_trials: run.len(),
                mi_correct: count(&out.mi_labels),
                oracle_correct: count(&oracle),
            });
        }
    }
    let n_trials: usize = runs.iter().map(|r| r.n_trials).sum();
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    Ok(DispatchReport {
        run_size: size,
        n_runs: runs.len(),
        routing_accuracy: pct(
            runs.iter().filter(|r| r.gate_label == r.subject_label).count(),
            runs.len(),
        ),
        end_to_end_accuracy: pct(runs.iter().map(|r| r.mi_correct).sum(), n_trials),
        oracle_gate_accuracy: pct(runs.iter().map(|r| r.oracle_correct).sum(), n_trials),
        runs,
    })
}

// ---------------------------------------------------------------------------
// Whole-run helpers

/// One subject's pooled, preprocessed trials and its task settings.
pub struct SubjectInput<'a> {
    pub id: i64,
    pub trials: &'a TrialSet,
    pub task: MiTaskConfig,
}

/// Trains both MI models and the gate; returns the assembled pipeline and a
/// report holding the three task reports.
pub fn train_pipeline(
    subjects: [SubjectInput<'_>; 2],
    gate_classifier: &ClassifierConfig,
    cfg: &PipelineConfig,
    fingerprint: String,
) -> Result<(DispatchPipeline, EvaluationReport)> {
    let mut bundles = Vec::with_capacity(2);
    let mut tasks = Vec::with_capacity(3);
    for s in &subjects {
        let (b, r) = train_mi(s.trials, s.id, cfg, &s.task)?;
        bundles.push(b);
        tasks.push(r);
    }
    let (gate, r) = train_gate(
        [subjects[0].trials, subjects[1].trials],
        [subjects[0].id, subjects[1].id],
        cfg,
        gate_classifier,
    )?;
    tasks.push(r);
    let pipeline = DispatchPipeline::new(gate, bundles)?;
    Ok((
        pipeline,
        EvaluationReport {
            config_fingerprint: fingerprint,
            seed: cfg.seed,
            tasks,
            dispatch: None,
        },
    ))
}

/// Held-out trials of both subjects under `cfg`'s split.
pub fn held_out(subjects: [(&TrialSet, i64); 2], cfg: &PipelineConfig) -> Result<[TrialSet; 2]> {
    let mut out = Vec::with_capacity(2);
    for (ts, id) in subjects {
        let (_, te) = split_subject(ts, cfg, id)?;
        out.push(ts.select(&te)?);
    }
    let second = out.pop().expect("two subjects");
    let first = out.pop().expect("two subjects");
    Ok([first, second])
}

/// Column order of the accuracy table.
pub const TABLE_CLASSIFIERS: [&str; 4] = ["LogReg", "LDA", "NB", "Ensemble"];

pub fn table_classifiers() -> [ClassifierConfig; 4] {
    [
        ClassifierConfig::logreg(),
        ClassifierConfig::lda(),
        ClassifierConfig::gnb(),
        ClassifierConfig::ensemble(),
    ]
}

/// Test accuracies (%) of every table classifier on every task. MI rows use
/// per-trial accuracy, the cross-subject row uses sectioned accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<(String, [f64; 4])>,
    /// Per-trial cross-subject accuracies, for reference.
    pub x_subject_per_trial: [f64; 4],
}

impl ResultsTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:<10}", "Task");
        for c in TABLE_CLASSIFIERS {
            out.push_str(&format!(" | {c:>9}"));
        }
        out.push('\n');
        out.push_str(&"-".repeat(10 + 4 * 12));
        out.push('\n');
        for (name, vals) in &self.rows {
            out.push_str(&format!("{name:<10}"));
            for v in vals {
                out.push_str(&format!(" | {:>8.2}%", v));
            }
            out.push('\n');
        }
        out
    }
}

pub fn results_table(subjects: [(&TrialSet, i64, bool); 2], cfg: &PipelineConfig) -> Result<ResultsTable> {
    let kinds = table_classifiers();
    let mut rows = Vec::with_capacity(3);
    for (i, (ts, id, ica)) in subjects.iter().enumerate() {
        let mut vals = [0.0; 4];
        for (v, kind) in vals.iter_mut().zip(&kinds) {
            let (_, r) = train_mi(
                ts,
                *id,
                cfg,
                &MiTaskConfig {
                    ica: *ica,
                    classifier: *kind,
                },
            )?;
            *v = r.test_accuracy;
        }
        rows.push((format!("MI-sub{}", i + 1), vals));
    }
    let mut xsub = [0.0; 4];
    let mut per_trial = [0.0; 4];
    for ((v, pt), kind) in xsub.iter_mut().zip(per_trial.iter_mut()).zip(&kinds) {
        let (_, r) = train_gate(
            [subjects[0].0, subjects[1].0],
            [subjects[0].1, subjects[1].1],
            cfg,
            kind,
        )?;
        *v = r.sectioned.as_ref().map(|s| s.accuracy).unwrap_or(0.0);
        *pt = r.test_accuracy;
    }
    rows.push(("X-sub".into(), xsub));
    Ok(ResultsTable {
        rows,
        x_subject_per_trial: per_trial,
    })
}

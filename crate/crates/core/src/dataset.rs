//! Recordings, trials, and the canonical on-disk format.
//!
//! A recording on disk is a pair of files: `<name>.json` (header) and the raw
//! sample file it names, holding little-endian `f32` values in sample-major
//! order (`[sample][channel]`). Samples are held in memory as `f64`; every
//! value that came from disk or from [`synthesize_recording`] is exactly
//! representable as `f32`, so saving and reloading is bit-exact.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

/// Channel layout of the synthetic generator (mirrors a 3 EEG + 3 EOG montage).
pub const SYNTH_CHANNELS: [(&str, ChannelKind); 6] = [
    ("C3", ChannelKind::Eeg),
    ("Cz", ChannelKind::Eeg),
    ("C4", ChannelKind::Eeg),
    ("EOG1", ChannelKind::Eog),
    ("EOG2", ChannelKind::Eog),
    ("EOG3", ChannelKind::Eog),
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("sample file holds {actual} bytes, header implies {expected}")]
    SampleSizeMismatch { expected: u64, actual: u64 },
    #[error("non-finite sample at row {sample}, channel {channel}")]
    NonFiniteSample { sample: usize, channel: usize },
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("event {event} (onset {onset}) window [{from}, {to}) exceeds recording of {n_samples} samples")]
    WindowOutOfRange {
        event: usize,
        onset: usize,
        from: i64,
        to: i64,
        n_samples: usize,
    },
    #[error("invalid epoch window [{0}, {1}] s")]
    InvalidWindow(f64, f64),
    #[error("event {event} has label {label}; trial labels must be 0 or 1")]
    InvalidLabel { event: usize, label: i64 },
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("split leaves {train} training and {test} test trials")]
    DegenerateSplit { train: usize, test: usize },
    #[error("train fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("trial sets have incompatible layouts: {0}")]
    LayoutMismatch(String),
    #[error("empty trial set")]
    Empty,
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    #[serde(rename = "EEG")]
    Eeg,
    #[serde(rename = "EOG")]
    Eog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    pub kind: ChannelKind,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub onset: usize,
    pub label: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub fs: f64,
    pub channels: Vec<ChannelInfo>,
    /// `[n_samples × n_channels]`, microvolts.
    pub samples: Array2<f64>,
    pub events: Vec<Event>,
    /// Session tag, taken from the header's file stem when loaded.
    pub session: String,
}

impl Recording {
    /// Builds a recording after checking every invariant.
    pub fn new(
        fs: f64,
        channels: Vec<ChannelInfo>,
        samples: Array2<f64>,
        events: Vec<Event>,
        session: impl Into<String>,
    ) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(DatasetError::InvalidRecording(format!("fs must be positive, got {fs}")));
        }
        if channels.len() != samples.ncols() {
            return Err(DatasetError::InvalidRecording(format!(
                "{} channels declared, sample matrix has {} columns",
                channels.len(),
                samples.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for (i, ch) in channels.iter().enumerate() {
            if !seen.insert(ch.name.as_str()) {
                return Err(DatasetError::InvalidRecording(format!(
                    "duplicate channel name {}",
                    ch.name
                )));
            }
            if ch.index != i {
                return Err(DatasetError::InvalidRecording(format!(
                    "channel {} has index {} at position {i}",
                    ch.name, ch.index
                )));
            }
        }
        for (i, e) in events.iter().enumerate() {
            if e.onset >= samples.nrows() {
                return Err(DatasetError::InvalidRecording(format!(
                    "event {i} onset {} beyond {} samples",
                    e.onset,
                    samples.nrows()
                )));
            }
        }
        if let Some(((r, c), _)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DatasetError::NonFiniteSample { sample: r, channel: c });
        }
        Ok(Self {
            fs,
            channels,
            samples,
            events,
            session: session.into(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn indices_of(&self, kind: ChannelKind) -> Vec<usize> {
        indices_of(&self.channels, kind)
    }

    /// Same recording with the sample matrix replaced (e.g. after filtering).
    pub fn with_samples(&self, samples: Array2<f64>) -> Result<Self> {
        Self::new(
            self.fs,
            self.channels.clone(),
            samples,
            self.events.clone(),
            self.session.clone(),
        )
    }
}

pub(crate) fn indices_of(channels: &[ChannelInfo], kind: ChannelKind) -> Vec<usize> {
    channels.iter().filter(|c| c.kind == kind).map(|c| c.index).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderChannel {
    name: String,
    kind: ChannelKind,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordingHeader {
    format_version: u32,
    fs: f64,
    channels: Vec<HeaderChannel>,
    n_samples: usize,
    events: Vec<Event>,
    data_file: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a recording from its JSON header; the sample file is resolved
/// relative to the header's directory.
pub fn load_recording(header_path: impl AsRef<Path>) -> Result<Recording> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(io_err(header_path))?;
    let header: RecordingHeader =
        serde_json::from_str(&text).map_err(|e| DatasetError::MalformedHeader(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(DatasetError::MalformedHeader(format!(
            "unsupported format_version {}",
            header.format_version
        )));
    }
    if !(header.fs.is_finite() && header.fs > 0.0) {
        return Err(DatasetError::MalformedHeader(format!(
            "fs must be positive, got {}",
            header.fs
        )));
    }
    if header.channels.is_empty() {
        return Err(DatasetError::MalformedHeader("no channels".into()));
    }
    let n_ch = header.channels.len();
    let data_path = header_path.parent().unwrap_or(Path::new(".")).join(&header.data_file);
    let bytes = fs::read(&data_path).map_err(io_err(&data_path))?;
    let expected = (header.n_samples * n_ch * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(DatasetError::SampleSizeMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let mut samples = Array2::zeros((header.n_samples, n_ch));
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        let (r, c) = (i / n_ch, i % n_ch);
        if !v.is_finite() {
            return Err(DatasetError::NonFiniteSample { sample: r, channel: c });
        }
        samples[[r, c]] = f64::from(v);
    }
    let channels = header
        .channels
        .into_iter()
        .enumerate()
        .map(|(index, c)| ChannelInfo {
            name: c.name,
            kind: c.kind,
            index,
        })
        .collect();
    let session = header_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Recording::new(header.fs, channels, samples, header.events, session).map_err(|e| match e {
        DatasetError::InvalidRecording(m) => DatasetError::MalformedHeader(m),
        other => other,
    })
}

/// Writes `<dir>/<name>.json` and `<dir>/<name>.f32`; returns the header path.
pub fn save_recording(rec: &Recording, dir: impl AsRef<Path>, name: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let data_file = format!("{name}.f32");
    let header = RecordingHeader {
        format_version: FORMAT_VERSION,
        fs: rec.fs,
        channels: rec
            .channels
            .iter()
            .map(|c| HeaderChannel {
                name: c.name.clone(),
                kind: c.kind,
            })
            .collect(),
        n_samples: rec.n_samples(),
        events: rec.events.clone(),
        data_file: data_file.clone(),
    };
    let mut bytes = Vec::with_capacity(rec.samples.len() * 4);
    for row in rec.samples.rows() {
        for &v in row {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let data_path = dir.join(&data_file);
    fs::write(&data_path, bytes).map_err(io_err(&data_path))?;
    let header_path = dir.join(format!("{name}.json"));
    let json = serde_json::to_string_pretty(&header).expect("header serialises");
    fs::write(&header_path, json + "\n").map_err(io_err(&header_path))?;
    Ok(header_path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// `[n_window_samples × n_channels]`
    pub data: Array2<f64>,
    pub label: u8,
    pub subject_id: i64,
    pub source_session: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelSemantics {
    /// 0 = left hand, 1 = right hand
    Mi,
    /// 0 = first subject, 1 = second subject
    Subject,
}

/// Trials sharing one sampling rate, channel layout and window length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub fs: f64,
    pub channels: Vec<ChannelInfo>,
    pub trials: Vec<Trial>,
    pub semantics: LabelSemantics,
}

impl TrialSet {
    pub fn new(fs: f64, channels: Vec<ChannelInfo>, trials: Vec<Trial>, semantics: LabelSemantics) -> Result<Self> {
        if trials.is_empty() {
            return Err(DatasetError::Empty);
        }
        let shape = trials[0].data.dim();
        if shape.1 != channels.len() {
            return Err(DatasetError::LayoutMismatch(format!(
                "{} channels declared, trials have {}",
                channels.len(),
                shape.1
            )));
        }
        if let Some(t) = trials.iter().find(|t| t.data.dim() != shape) {
            return Err(DatasetError::LayoutMismatch(format!(
                "trial shape {:?} differs from {:?}",
                t.data.dim(),
                shape
            )));
        }
        if let Some((i, t)) = trials.iter().enumerate().find(|(_, t)| t.label > 1) {
            return Err(DatasetError::InvalidLabel {
                event: i,
                label: i64::from(t.label),
            });
        }
        Ok(Self {
            fs,
            channels,
            trials,
            semantics,
        })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.trials.iter().map(|t| t.label).collect()
    }

    pub fn window_len(&self) -> usize {
        self.trials[0].data.nrows()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn indices_of(&self, kind: ChannelKind) -> Vec<usize> {
        indices_of(&self.channels, kind)
    }

    /// Subset in the given index order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let trials = idx.iter().map(|&i| self.trials[i].clone()).collect();
        Self::new(self.fs, self.channels.clone(), trials, self.semantics)
    }

    pub fn with_trials(&self, trials: Vec<Trial>) -> Result<Self> {
        Self::new(self.fs, self.channels.clone(), trials, self.semantics)
    }

    /// Pools several sets (e.g. sessions of one subject) in order.
    pub fn concat(sets: &[TrialSet]) -> Result<Self> {
        let first = sets.first().ok_or(DatasetError::Empty)?;
        let mut trials = Vec::new();
        for s in sets {
            if s.fs != first.fs || s.channels != first.channels || s.semantics != first.semantics {
                return Err(DatasetError::LayoutMismatch(
                    "fs, channels or label semantics differ".into(),
                ));
            }
            trials.extend(s.trials.iter().cloned());
        }
        Self::new(first.fs, first.channels.clone(), trials, first.semantics)
    }

    /// Stacks every trial's rows for the given channel columns into one
    /// `[n_trials·window × channels]` matrix.
    pub fn stacked(&self, channel_idx: &[usize]) -> Array2<f64> {
        let w = self.window_len();
        let mut out = Array2::zeros((w * self.len(), channel_idx.len()));
        for (t, trial) in self.trials.iter().enumerate() {
            for (j, &c) in channel_idx.iter().enumerate() {
                out.slice_mut(s![t * w..(t + 1) * w, j]).assign(&trial.data.column(c));
            }
        }
        out
    }
}

/// Cuts one window per event, `[onset + round(start·fs), onset + round(end·fs))`.
pub fn epoch_trials(rec: &Recording, window_start_s: f64, window_end_s: f64, subject_id: i64) -> Result<TrialSet> {
    if !(window_start_s.is_finite() && window_end_s.is_finite() && window_end_s > window_start_s) {
        return Err(DatasetError::InvalidWindow(window_start_s, window_end_s));
    }
    let off_start = (window_start_s * rec.fs).round() as i64;
    let off_end = (window_end_s * rec.fs).round() as i64;
    if off_end <= off_start {
        return Err(DatasetError::InvalidWindow(window_start_s, window_end_s));
    }
    let n = rec.n_samples();
    let mut trials = Vec::with_capacity(rec.events.len());
    for (i, ev) in rec.events.iter().enumerate() {
        let from = ev.onset as i64 + off_start;
        let to = ev.onset as i64 + off_end;
        if from < 0 || to > n as i64 {
            return Err(DatasetError::WindowOutOfRange {
                event: i,
                onset: ev.onset,
                from,
                to,
                n_samples: n,
            });
        }
        let label = u8::try_from(ev.label)
            .ok()
            .filter(|l| *l <= 1)
            .ok_or(DatasetError::InvalidLabel {
                event: i,
                label: ev.label,
            })?;
        trials.push(Trial {
            data: rec.samples.slice(s![from as usize..to as usize, ..]).to_owned(),
            label,
            subject_id,
            source_session: rec.session.clone(),
        });
    }
    TrialSet::new(rec.fs, rec.channels.clone(), trials, LabelSemantics::Mi)
}

/// Seeded partition of `0..n` into (train, test) index lists.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    let n_train = (train_fraction * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DatasetError::DegenerateSplit {
            train: n_train,
            test: n.saturating_sub(n_train),
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn train_test_split(ts: &TrialSet, train_fraction: f64, seed: u64) -> Result<(TrialSet, TrialSet)> {
    let (train, test) = split_indices(ts.len(), train_fraction, seed)?;
    Ok((ts.select(&train)?, ts.select(&test)?))
}

/// One class's (or one background) oscillation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationProfile {
    pub frequency_hz: f64,
    pub amplitude_uv: f64,
    pub channel: String,
}

fn default_period() -> f64 {
    8.0
}
fn default_burst() -> [f64; 2] {
    [0.5, 4.0]
}
fn default_lead() -> f64 {
    2.0
}
fn default_blink_amp() -> f64 {
    100.0
}
fn default_blink_width() -> f64 {
    0.08
}
fn default_eog_gains() -> [f64; 3] {
    [1.0, 0.8, 0.6]
}
fn default_eeg_gains() -> [f64; 3] {
    [0.3, 0.4, 0.25]
}
fn default_session() -> String {
    "synthetic".into()
}

/// Parameters of the synthetic generator. Channels are fixed to
/// [`SYNTH_CHANNELS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub fs: f64,
    pub trials_per_class: usize,
    /// Index 0 drives label-0 trials, index 1 label-1 trials.
    pub classes: [OscillationProfile; 2],
    pub noise_sigma_uv: f64,
    #[serde(default)]
    pub background: Vec<OscillationProfile>,
    #[serde(default)]
    pub blink_rate_hz: f64,
    #[serde(default = "default_blink_amp")]
    pub blink_amplitude_uv: f64,
    #[serde(default = "default_blink_width")]
    pub blink_width_s: f64,
    #[serde(default = "default_eog_gains")]
    pub blink_eog_gains: [f64; 3],
    #[serde(default = "default_eeg_gains")]
    pub blink_eeg_gains: [f64; 3],
    #[serde(default = "default_period")]
    pub trial_period_s: f64,
    /// Burst interval relative to cue onset.
    #[serde(default = "default_burst")]
    pub burst_window_s: [f64; 2],
    #[serde(default = "default_lead")]
    pub lead_in_s: f64,
    #[serde(default = "default_session")]
    pub session: String,
}

impl SynthSpec {
    /// Two-class spec with the given burst frequency on C3 (class 0) and C4 (class 1).
    pub fn lateralized(fs: f64, frequency_hz: f64, amplitude_uv: f64, trials_per_class: usize) -> Self {
        let prof = |ch: &str| OscillationProfile {
            frequency_hz,
            amplitude_uv,
            channel: ch.into(),
        };
        Self {
            fs,
            trials_per_class,
            classes: [prof("C3"), prof("C4")],
            noise_sigma_uv: 1.0,
            background: Vec::new(),
            blink_rate_hz: 0.0,
            blink_amplitude_uv: default_blink_amp(),
            blink_width_s: default_blink_width(),
            blink_eog_gains: default_eog_gains(),
            blink_eeg_gains: default_eeg_gains(),
            trial_period_s: default_period(),
            burst_window_s: default_burst(),
            lead_in_s: default_lead(),
            session: default_session(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DatasetError::InvalidSpec(m));
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        if self.trials_per_class == 0 {
            return bad("trials_per_class must be positive".into());
        }
        if !(self.noise_sigma_uv.is_finite() && self.noise_sigma_uv >= 0.0) {
            return bad(format!("noise_sigma_uv must be >= 0, got {}", self.noise_sigma_uv));
        }
        for p in self.classes.iter().chain(self.background.iter()) {
            if !(p.amplitude_uv.is_finite() && p.amplitude_uv > 0.0) {
                return bad(format!("amplitude must be positive, got {}", p.amplitude_uv));
            }
            if !(p.frequency_hz > 0.0 && p.frequency_hz < self.fs / 2.0) {
                return bad(format!("frequency {} Hz outside (0, fs/2)", p.frequency_hz));
            }
            if !SYNTH_CHANNELS
                .iter()
                .any(|(n, k)| *n == p.channel && *k == ChannelKind::Eeg)
            {
                return bad(format!("unknown EEG channel {}", p.channel));
            }
        }
        if !(self.blink_rate_hz.is_finite() && self.blink_rate_hz >= 0.0) {
            return bad("blink_rate_hz must be >= 0".into());
        }
        if self.blink_rate_hz > 0.0 && !(self.blink_amplitude_uv > 0.0 && self.blink_width_s > 0.0) {
            return bad("blink amplitude and width must be positive".into());
        }
        let [b0, b1] = self.burst_window_s;
        if !(self.trial_period_s > 0.0 && b0 >= 0.0 && b1 > b0 && b1 <= self.trial_period_s) {
            return bad("burst window must lie inside the trial period".into());
        }
        if !(self.lead_in_s >= 0.0) {
            return bad("lead_in_s must be >= 0".into());
        }
        Ok(())
    }
}

/// Deterministic synthetic recording for `(spec, seed)`.
///
/// Each cue starts a trial; label-k trials carry a sinusoid burst (random
/// phase, 0.1 s cosine ramps) on the class-k channel during the burst window.
/// White noise of `noise_sigma_uv` is independent per channel. Blinks arrive
/// as a Poisson process and add a Gaussian bump to all EOG channels and,
/// scaled down, to the EEG channels.
pub fn synthesize_recording(spec: &SynthSpec, seed: u64) -> Result<Recording> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = spec.fs;
    let n_trials = 2 * spec.trials_per_class;
    let period = (spec.trial_period_s * fs).round() as usize;
    let lead = (spec.lead_in_s * fs).round() as usize;
    let n_samples = lead + n_trials * period;
    let n_ch = SYNTH_CHANNELS.len();
    let col = |name: &str| SYNTH_CHANNELS.iter().position(|(n, _)| *n == name).expect("validated");

    let mut labels: Vec<i64> = (0..n_trials).map(|i| (i % 2) as i64).collect();
    labels.shuffle(&mut rng);

    let mut x = Array2::<f64>::zeros((n_samples, n_ch));
    if spec.noise_sigma_uv > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma_uv).expect("sigma validated");
        x.iter_mut().for_each(|v| *v = noise.sample(&mut rng));
    }

    for bg in &spec.background {
        let c = col(&bg.channel);
        let phase = rng.random_range(0.0..2.0 * PI);
        let w = 2.0 * PI * bg.frequency_hz / fs;
        for (i, v) in x.column_mut(c).iter_mut().enumerate() {
            *v += bg.amplitude_uv * (w * i as f64 + phase).sin();
        }
    }

    let burst_from = (spec.burst_window_s[0] * fs).round() as usize;
    let burst_to = (spec.burst_window_s[1] * fs).round() as usize;
    let ramp = ((0.1 * fs).round() as usize).max(1).min((burst_to - burst_from) / 2);
    let mut events = Vec::with_capacity(n_trials);
    for (k, &label) in labels.iter().enumerate() {
        let onset = lead + k * period;
        events.push(Event { onset, label });
        let prof = &spec.classes[label as usize];
        let c = col(&prof.channel);
        let phase = rng.random_range(0.0..2.0 * PI);
        let w = 2.0 * PI * prof.frequency_hz / fs;
        let len = burst_to - burst_from;
        for j in 0..len {
            let taper = if j < ramp {
                0.5 - 0.5 * (PI * j as f64 / ramp as f64).cos()
            } else if len - j <= ramp {
                0.5 - 0.5 * (PI * (len - j) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            x[[onset + burst_from + j, c]] += taper * prof.amplitude_uv * (w * j as f64 + phase).sin();
        }
    }

    if spec.blink_rate_hz > 0.0 {
        let gap = Exp::new(spec.blink_rate_hz).expect("rate validated");
        let duration = n_samples as f64 / fs;
        let width = spec.blink_width_s * fs;
        let half = (4.0 * width).ceil() as i64;
        let eeg_cols = [col("C3"), col("Cz"), col("C4")];
        let eog_cols = [col("EOG1"), col("EOG2"), col("EOG3")];
        let mut t = gap.sample(&mut rng);
        while t < duration {
            let amp = spec.blink_amplitude_uv * rng.random_range(0.8..1.2);
            let centre = t * fs;
            let c0 = centre.round() as i64;
            for i in (c0 - half).max(0)..(c0 + half + 1).min(n_samples as i64) {
                let d = (i as f64 - centre) / width;
                let bump = amp * (-0.5 * d * d).exp();
                for (&c, g) in eog_cols.iter().zip(spec.blink_eog_gains) {
                    x[[i as usize, c]] += g * bump;
                }
                for (&c, g) in eeg_cols.iter().zip(spec.blink_eeg_gains) {
                    x[[i as usize, c]] += g * bump;
                }
            }
            t += gap.sample(&mut rng);
        }
    }

    // keep samples f32-exact so the on-disk format round-trips bit for bit
    x.mapv_inplace(|v| f64::from(v as f32));
    let channels = SYNTH_CHANNELS
        .iter()
        .enumerate()
        .map(|(index, (name, kind))| ChannelInfo {
            name: (*name).into(),
            kind: *kind,
            index,
        })
        .collect();
    Recording::new(fs, channels, x, events, spec.session.clone())
}

/// Columns of `x` for the named channels.
pub fn select_columns(x: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(1), idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::max_abs_cross_correlation;

    fn small_rec(n: usize, events: Vec<Event>) -> Recording {
        let channels = SYNTH_CHANNELS
            .iter()
            .enumerate()
            .map(|(index, (n, k))| ChannelInfo {
                name: (*n).into(),
                kind: *k,
                index,
            })
            .collect();
        let samples = Array2::from_shape_fn((n, 6), |(r, c)| (r * 6 + c) as f64);
        Recording::new(250.0, channels, samples, events, "s").unwrap()
    }

    #[test]
    fn load_declared_shape() {
        let dir = tempfile::tempdir().unwrap();
        let rec = small_rec(1000, vec![Event { onset: 10, label: 1 }]);
        let hp = save_recording(&rec, dir.path(), "rec").unwrap();
        assert_eq!(fs::metadata(dir.path().join("rec.f32")).unwrap().len(), 24000);
        let back = load_recording(&hp).unwrap();
        assert_eq!(back.samples.dim(), (1000, 6));
        assert_eq!(back.fs, 250.0);
        assert_eq!(back.indices_of(ChannelKind::Eeg).len(), 3);
        assert_eq!(back.indices_of(ChannelKind::Eog).len(), 3);
    }

    #[test]
    fn truncated_sample_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let rec = small_rec(1000, vec![]);
        let hp = save_recording(&rec, dir.path(), "rec").unwrap();
        let dp = dir.path().join("rec.f32");
        let mut b = fs::read(&dp).unwrap();
        b.truncate(23996);
        fs::write(&dp, b).unwrap();
        assert!(matches!(
            load_recording(&hp),
            Err(DatasetError::SampleSizeMismatch {
                expected: 24000,
                actual: 23996
            })
        ));
    }

    #[test]
    fn malformed_and_nonfinite_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let hp = dir.path().join("bad.json");
        fs::write(&hp, r#"{"format_version":1,"fs":250}"#).unwrap();
        assert!(matches!(load_recording(&hp), Err(DatasetError::MalformedHeader(_))));

        let rec = small_rec(10, vec![]);
        let hp = save_recording(&rec, dir.path(), "nan").unwrap();
        let dp = dir.path().join("nan.f32");
        let mut b = fs::read(&dp).unwrap();
        b[8..12].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&dp, b).unwrap();
        assert!(matches!(
            load_recording(&hp),
            Err(DatasetError::NonFiniteSample { sample: 0, channel: 2 })
        ));
    }

    #[test]
    fn epoch_window_length() {
        let rec = small_rec(
            3000,
            vec![Event { onset: 100, label: 0 }, Event { onset: 1500, label: 1 }],
        );
        let ts = epoch_trials(&rec, 0.5, 3.5, 7).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts.trials[0].data.dim(), (750, 6));
        assert_eq!(ts.trials[1].label, 1);
        assert_eq!(ts.trials[0].subject_id, 7);
        // first row of trial 0 is sample 100 + 125
        assert_eq!(ts.trials[0].data[[0, 0]], (225 * 6) as f64);
    }

    #[test]
    fn epoch_out_of_range() {
        let rec = small_rec(3000, vec![Event { onset: 2990, label: 0 }]);
        assert!(matches!(
            epoch_trials(&rec, 0.5, 3.5, 1),
            Err(DatasetError::WindowOutOfRange { event: 0, .. })
        ));
    }

    #[test]
    fn split_sizes_and_errors() {
        let (tr, te) = split_indices(100, 0.8, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        let mut all: Vec<_> = tr.iter().chain(te.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 0.8, 3).unwrap(), (tr, te));
        assert!(matches!(
            split_indices(5, 0.1, 0),
            Err(DatasetError::DegenerateSplit { train: 0, test: 5 })
        ));
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec::lateralized(250.0, 10.0, 5.0, 10);
        let a = synthesize_recording(&spec, 11).unwrap();
        let b = synthesize_recording(&spec, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.events.len(), 20);
        let c = synthesize_recording(&spec, 12).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn synth_rejects_bad_spec() {
        let mut spec = SynthSpec::lateralized(250.0, 10.0, 5.0, 10);
        spec.fs = -1.0;
        assert!(matches!(
            synthesize_recording(&spec, 0),
            Err(DatasetError::InvalidSpec(_))
        ));
        let mut spec = SynthSpec::lateralized(250.0, 10.0, 5.0, 10);
        spec.classes[0].amplitude_uv = 0.0;
        assert!(synthesize_recording(&spec, 0).is_err());
        let mut spec = SynthSpec::lateralized(250.0, 10.0, 5.0, 0);
        spec.trials_per_class = 0;
        assert!(synthesize_recording(&spec, 0).is_err());
    }

    #[test]
    fn blinks_reach_eog_and_eeg() {
        let mut spec = SynthSpec::lateralized(250.0, 10.0, 5.0, 5);
        spec.blink_rate_hz = 0.3;
        let rec = synthesize_recording(&spec, 4).unwrap();
        let eeg = rec.samples.select(Axis(1), &rec.indices_of(ChannelKind::Eeg));
        let eog = rec.samples.select(Axis(1), &rec.indices_of(ChannelKind::Eog));
        assert!(max_abs_cross_correlation(eeg.view(), eog.view()) > 0.5);
    }

    #[test]
    fn spec_json_defaults() {
        let spec: SynthSpec = serde_json::from_str(
            r#"{"fs":250,"trials_per_class":3,"noise_sigma_uv":1,
                "classes":[{"frequency_hz":10,"amplitude_uv":5,"channel":"C3"},
                           {"frequency_hz":10,"amplitude_uv":5,"channel":"C4"}]}"#,
        )
        .unwrap();
        assert_eq!(spec.trial_period_s, 8.0);
        assert!(serde_json::from_str::<SynthSpec>(r#"{"fs":250,"bogus":1}"#).is_err());
    }
}

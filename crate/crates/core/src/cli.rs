//! Command-line front end.
//!
//! Exit codes: 0 success, 2 validation/config/I-O, 3 numeric divergence,
//! 4 model/data incompatibility.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierConfig, ClassifierError};
use crate::dataset::{
    load_recording, save_recording, synthesize_recording, ChannelKind, DatasetError, Recording, SynthSpec, TrialSet,
};
use crate::features::{fit_pca, FeatureError, FeatureExtractor, Standardizer};
use crate::ica::IcaError;
use crate::pipeline::{
    bandpass_recording, config_fingerprint, evaluate_dispatch, held_out, prepare_subject, results_table, split_subject,
    train_pipeline, DispatchPipeline, EogCleaner, EvaluationReport, MiTaskConfig, PipelineConfig, PipelineError,
    SubjectInput,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn mismatch(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_MISMATCH,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Classifier(ClassifierError::NonFiniteLoss { .. })
            | PipelineError::Ica(IcaError::NoConvergence { .. }) => EXIT_DIVERGENCE,
            PipelineError::Classifier(ClassifierError::FeatureNameMismatch { .. })
            | PipelineError::Classifier(ClassifierError::ShapeMismatch { .. })
            | PipelineError::Feature(FeatureError::MissingChannel(_))
            | PipelineError::Feature(FeatureError::ShapeMismatch { .. })
            | PipelineError::Ica(IcaError::ChannelMismatch { .. })
            | PipelineError::UnknownSubjectLabel(_) => EXIT_MISMATCH,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------------------
// Run configuration

fn default_gate() -> ClassifierConfig {
    ClassifierConfig::ensemble()
}
fn default_mi() -> ClassifierConfig {
    ClassifierConfig::lda()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectConfig {
    pub id: i64,
    /// Directory holding the subject's recording headers (all `*.json`).
    pub dir: PathBuf,
    /// Defaults to on for the first subject, off for the second.
    #[serde(default)]
    pub ica: Option<bool>,
    #[serde(default = "default_mi")]
    pub classifier: ClassifierConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub subjects: [SubjectConfig; 2],
    #[serde(default = "default_gate")]
    pub gate: ClassifierConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

/// The path-free part of a run configuration; its hash is the fingerprint.
#[derive(Serialize)]
struct Normalized<'a> {
    subjects: Vec<(i64, bool, &'a ClassifierConfig)>,
    gate: &'a ClassifierConfig,
    pipeline: &'a PipelineConfig,
}

impl RunConfig {
    /// Reads, parses and validates; relative paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data_dir = base.join(&cfg.data_dir);
        if let Some(out) = &cfg.out_dir {
            cfg.out_dir = Some(base.join(out));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.pipeline.validate()?;
        if self.subjects[0].id == self.subjects[1].id {
            return Err(CliError::config("subject ids must differ"));
        }
        if !self.data_dir.is_dir() {
            return Err(CliError::config(format!(
                "data dir {} not found",
                self.data_dir.display()
            )));
        }
        Ok(())
    }

    pub fn ica_flag(&self, i: usize) -> bool {
        self.subjects[i].ica.unwrap_or(i == 0)
    }

    pub fn fingerprint(&self) -> String {
        config_fingerprint(&Normalized {
            subjects: (0..2)
                .map(|i| (self.subjects[i].id, self.ica_flag(i), &self.subjects[i].classifier))
                .collect(),
            gate: &self.gate,
            pipeline: &self.pipeline,
        })
    }

    fn subject_dir(&self, i: usize) -> PathBuf {
        self.data_dir.join(&self.subjects[i].dir)
    }
}

/// Loads every recording header in `dir`, sorted by file name.
pub fn load_sessions(dir: &Path) -> CliResult<Vec<Recording>> {
    let mut headers: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    headers.sort();
    if headers.is_empty() {
        return Err(CliError::config(format!("no recordings in {}", dir.display())));
    }
    headers.iter().map(|h| Ok(load_recording(h)?)).collect()
}

/// Both subjects' preprocessed trials.
pub fn prepare_all(cfg: &RunConfig) -> CliResult<[TrialSet; 2]> {
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        let sessions = load_sessions(&cfg.subject_dir(i))?;
        log::info!("subject {}: {} session(s)", cfg.subjects[i].id, sessions.len());
        out.push(prepare_subject(
            &sessions,
            &cfg.pipeline.preprocess,
            cfg.subjects[i].id,
        )?);
    }
    let b = out.pop().expect("two");
    let a = out.pop().expect("two");
    Ok([a, b])
}

// ---------------------------------------------------------------------------
// Saved pipeline

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedPipeline {
    pub config_fingerprint: String,
    pub gate_features: Vec<String>,
    pub mi_features: Vec<(i64, Vec<String>)>,
    pub pipeline: DispatchPipeline,
}

pub const PIPELINE_FILE: &str = "pipeline.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const DISPATCH_REPORT_FILE: &str = "dispatch_report.json";
pub const TABLE_FILE: &str = "table.txt";

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Commands

#[derive(Debug, Parser)]
#[command(name = "migate", version, about = "Gated motor-imagery EEG classification")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (or file, for `plot`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the classifier comparison table after training.
    #[arg(long, global = true)]
    pub table: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic recording from a spec file.
    Synth {
        spec: PathBuf,
        /// File stem; defaults to the spec's session name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Convert native dataset files (not implemented).
    Convert { input: Option<PathBuf> },
    /// Train both MI models and the gate.
    Train,
    /// Dispatch held-out runs through a trained pipeline.
    DispatchSim {
        /// Directory containing `pipeline.json`; defaults to the output dir.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Emit figure data as CSV.
    Plot {
        kind: PlotKind,
        /// Subject position in the config (0 or 1).
        #[arg(long, default_value_t = 0)]
        subject: usize,
        /// Also write an SVG scatter (features only).
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Seconds of signal to export (ica only).
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Features,
    Ica,
}

/// Parses `std::env::args` and runs; returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Like [`run`] with explicit arguments; the first is the program name.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth { spec, name } => cmd_synth(spec, cli.out.as_deref(), name.as_deref(), cli.seed.unwrap_or(0)),
        Command::Convert { .. } => Err(CliError::config(
            "convert is not implemented: export each session to a <name>.json header plus <name>.f32 samples \
             (see README)",
        )),
        Command::Train => cmd_train(&load_config(cli)?, cli.table),
        Command::DispatchSim { models } => {
            let cfg = load_config(cli)?;
            let models = match models {
                Some(m) => m.clone(),
                None => out_dir(&cfg)?,
            };
            cmd_dispatch_sim(&cfg, &models)
        }
        Command::Plot {
            kind,
            subject,
            svg,
            seconds,
        } => {
            let cfg = load_config(cli)?;
            let out = cli
                .out
                .clone()
                .ok_or_else(|| CliError::config("plot needs --out <file.csv>"))?;
            match kind {
                PlotKind::Features => cmd_plot_features(&cfg, *subject, &out, svg.as_deref()),
                PlotKind::Ica => cmd_plot_ica(&cfg, *subject, &out, *seconds),
            }
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.pipeline.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    cfg.out_dir
        .clone()
        .ok_or_else(|| CliError::config("no output directory: set out_dir or pass --out"))
}

pub fn cmd_synth(spec_path: &Path, out: Option<&Path>, name: Option<&str>, seed: u64) -> CliResult<()> {
    let text = fs::read_to_string(spec_path).map_err(|e| CliError::config(format!("{}: {e}", spec_path.display())))?;
    let spec: SynthSpec =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", spec_path.display())))?;
    spec.validate()?;
    let out = out.ok_or_else(|| CliError::config("synth needs --out <dir>"))?;
    fs::create_dir_all(out)?;
    let rec = synthesize_recording(&spec, seed)?;
    let name = name.unwrap_or(&spec.session);
    let header = save_recording(&rec, out, name)?;
    println!(
        "wrote {} ({} samples x {} channels, {} events, seed {seed})",
        header.display(),
        rec.n_samples(),
        rec.channels.len(),
        rec.events.len()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, table: bool) -> CliResult<()> {
    let out = out_dir(cfg)?;
    fs::create_dir_all(&out)?;
    let [t1, t2] = prepare_all(cfg)?;
    let fingerprint = cfg.fingerprint();
    let inputs = [
        SubjectInput {
            id: cfg.subjects[0].id,
            trials: &t1,
            task: MiTaskConfig {
                ica: cfg.ica_flag(0),
                classifier: cfg.subjects[0].classifier,
            },
        },
        SubjectInput {
            id: cfg.subjects[1].id,
            trials: &t2,
            task: MiTaskConfig {
                ica: cfg.ica_flag(1),
                classifier: cfg.subjects[1].classifier,
            },
        },
    ];
    let (pipeline, report) = train_pipeline(inputs, &cfg.gate, &cfg.pipeline, fingerprint.clone())?;
    let saved = SavedPipeline {
        config_fingerprint: fingerprint,
        gate_features: pipeline.gate.feature_names(),
        mi_features: pipeline
            .mi
            .values()
            .map(|b| (b.subject_id, b.feature_names()))
            .collect(),
        pipeline,
    };
    write_json(&out.join(PIPELINE_FILE), &saved)?;
    write_json(&out.join(TRAIN_REPORT_FILE), &report)?;
    for t in &report.tasks {
        let sectioned = t
            .sectioned
            .as_ref()
            .map(|s| format!(", sectioned {:.2}%", s.accuracy))
            .unwrap_or_default();
        println!(
            "{:<14} {:<9} train {:6.2}%  test {:6.2}%{sectioned}",
            t.task, t.classifier, t.train_accuracy, t.test_accuracy
        );
    }
    if table {
        let tab = results_table(
            [
                (&t1, cfg.subjects[0].id, cfg.ica_flag(0)),
                (&t2, cfg.subjects[1].id, cfg.ica_flag(1)),
            ],
            &cfg.pipeline,
        )?;
        let text = tab.render();
        print!("{text}");
        fs::write(out.join(TABLE_FILE), &text)?;
    }
    Ok(())
}

pub fn load_pipeline(models: &Path) -> CliResult<SavedPipeline> {
    let path = models.join(PIPELINE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::mismatch(format!("{}: {e}", path.display())))
}

pub fn cmd_dispatch_sim(cfg: &RunConfig, models: &Path) -> CliResult<()> {
    let saved = load_pipeline(models)?;
    let expected = cfg.pipeline.features.feature_names();
    let trained = saved
        .pipeline
        .feature_names()
        .into_iter()
        .chain(std::iter::once(saved.gate_features.clone()))
        .chain(saved.mi_features.iter().map(|(_, f)| f.clone()));
    for names in trained {
        if names != expected {
            return Err(CliError::mismatch(format!(
                "models were trained on features {names:?}, config produces {expected:?}"
            )));
        }
    }
    for (i, s) in cfg.subjects.iter().enumerate() {
        if saved.pipeline.gate.subject_ids[i] != s.id {
            return Err(CliError::mismatch(format!(
                "gate label {i} is subject {}, config lists subject {}",
                saved.pipeline.gate.subject_ids[i], s.id
            )));
        }
    }
    let out = out_dir(cfg)?;
    fs::create_dir_all(&out)?;
    let [t1, t2] = prepare_all(cfg)?;
    let [h1, h2] = held_out([(&t1, cfg.subjects[0].id), (&t2, cfg.subjects[1].id)], &cfg.pipeline)?;
    let dispatch = evaluate_dispatch(&saved.pipeline, [&h1, &h2], cfg.pipeline.seed)?;
    println!(
        "runs {}  routing {:.2}%  end-to-end {:.2}%  oracle-gate {:.2}%",
        dispatch.n_runs, dispatch.routing_accuracy, dispatch.end_to_end_accuracy, dispatch.oracle_gate_accuracy
    );
    let report = EvaluationReport {
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.pipeline.seed,
        tasks: Vec::new(),
        dispatch: Some(dispatch),
    };
    write_json(&out.join(DISPATCH_REPORT_FILE), &report)
}

/// Two-component PCA of the standardised features of every trial of one
/// subject, MI labels attached.
pub fn feature_projection(trials: &TrialSet, cfg: &PipelineConfig) -> CliResult<(Array2<f64>, Vec<u8>)> {
    let extractor = FeatureExtractor::fit(&cfg.features, trials)?;
    let fm = extractor.transform(trials)?;
    let x = Standardizer::fit(fm.x.view())?.apply(fm.x.view())?;
    let pca = fit_pca(x.view(), 2)?;
    Ok((pca.project(x.view())?, fm.y))
}

fn check_subject(subject: usize) -> CliResult<()> {
    if subject > 1 {
        return Err(CliError::config("--subject must be 0 or 1"));
    }
    Ok(())
}

pub fn cmd_plot_features(cfg: &RunConfig, subject: usize, out: &Path, svg: Option<&Path>) -> CliResult<()> {
    check_subject(subject)?;
    let sessions = load_sessions(&cfg.subject_dir(subject))?;
    let trials = prepare_subject(&sessions, &cfg.pipeline.preprocess, cfg.subjects[subject].id)?;
    let (pcs, labels) = feature_projection(&trials, &cfg.pipeline)?;
    let mut csv = String::from("pc1,pc2,label\n");
    for (row, l) in pcs.rows().into_iter().zip(&labels) {
        csv.push_str(&format!("{},{},{l}\n", row[0], row[1]));
    }
    fs::write(out, csv)?;
    if let Some(svg) = svg {
        fs::write(svg, scatter_svg(&pcs, &labels))?;
    }
    println!("wrote {} points", labels.len());
    Ok(())
}

/// Scatter plot as standalone SVG: red = right hand (1), blue = left hand (0).
pub fn scatter_svg(points: &Array2<f64>, labels: &[u8]) -> String {
    const W: f64 = 480.0;
    const M: f64 = 40.0;
    let span = |c: usize| {
        let col = points.column(c);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        }
    };
    let (x0, x1) = span(0);
    let (y0, y1) = span(1);
    let sx = |v: f64| M + (v - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |v: f64| W - M - (v - y0) / (y1 - y0) * (W - 2.0 * M);
    let mut s = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{W}\" viewBox=\"0 0 {W} {W}\">\n"
    );
    s.push_str(&format!(
        "<g stroke=\"black\"><line x1=\"{M}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/><line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{b}\"/></g>\n",
        b = W - M,
        r = W - M
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">PC1</text>\n<text x=\"12\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 12 {})\">PC2</text>\n",
        W / 2.0,
        W - 10.0,
        W / 2.0,
        W / 2.0
    ));
    s.push_str("<g fill-opacity=\"0.7\">\n");
    for (row, &l) in points.rows().into_iter().zip(labels) {
        let colour = if l == 1 { "red" } else { "blue" };
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{colour}\"/>\n",
            sx(row[0]),
            sy(row[1])
        ));
    }
    s.push_str("</g>\n</svg>\n");
    s
}

pub fn cmd_plot_ica(cfg: &RunConfig, subject: usize, out: &Path, seconds: f64) -> CliResult<()> {
    check_subject(subject)?;
    if !(seconds > 0.0) {
        return Err(CliError::config("--seconds must be positive"));
    }
    let id = cfg.subjects[subject].id;
    let sessions = load_sessions(&cfg.subject_dir(subject))?;
    let trials = prepare_subject(&sessions, &cfg.pipeline.preprocess, id)?;
    let (train_idx, _) = split_subject(&trials, &cfg.pipeline, id)?;
    let cleaner =
        EogCleaner::fit(&trials.select(&train_idx)?, &cfg.pipeline.ica, cfg.pipeline.seed).map_err(CliError::from)?;

    let rec = bandpass_recording(&sessions[0], &cfg.pipeline.preprocess)?;
    let n = ((seconds * rec.fs).round() as usize).min(rec.n_samples());
    let eeg_idx = rec.indices_of(ChannelKind::Eeg);
    let eog_idx = rec.indices_of(ChannelKind::Eog);
    let head = rec.samples.slice(ndarray::s![0..n, ..]);
    let sources = cleaner
        .model
        .sources(head.select(Axis(1), &eeg_idx).view())
        .map_err(|e| CliError::from(PipelineError::from(e)))?;
    let eog = head.select(Axis(1), &eog_idx);

    let mut csv = String::from("t");
    for k in 0..sources.ncols() {
        csv.push_str(&format!(",ic{k}"));
    }
    for &c in &eog_idx {
        csv.push_str(&format!(",{}", rec.channels[c].name));
    }
    csv.push('\n');
    for i in 0..n {
        csv.push_str(&format!("{}", i as f64 / rec.fs));
        for v in sources.row(i).iter().chain(eog.row(i).iter()) {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    fs::write(out, csv)?;
    println!(
        "wrote {n} samples; EOG scores {:?}, dropped {:?}",
        cleaner.scores.scores, cleaner.dropped
    );
    Ok(())
}

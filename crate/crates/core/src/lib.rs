//! Subject-gated motor-imagery EEG classification.
//!
//! The crate covers the full offline chain: a canonical recording format with
//! epoching and seeded synthetic data ([`dataset`]), Butterworth band-pass and
//! Welch spectra ([`dsp`]), FastICA-based EOG artifact removal ([`ica`]),
//! log sub-band power / CSP / PCA features ([`features`]), a handful of
//! from-scratch binary classifiers ([`classifiers`]) and the two-stage
//! gate + per-subject dispatch scheme ([`pipeline`]). [`cli`] wires it all to
//! the `migate` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod cli;
pub mod dataset;
pub mod dsp;
pub mod features;
pub mod ica;
mod linalg;
pub mod pipeline;
pub mod stats;

pub use classifiers::{ClassifierConfig, ClassifierModel};
pub use dataset::{ChannelInfo, ChannelKind, Recording, SynthSpec, Trial, TrialSet};
pub use dsp::{BandSpec, FilterCoefficients, Psd};
pub use features::{FeatureMatrix, PcaModel, Standardizer, SubbandLayout};
pub use ica::{EogScores, IcaModel};
pub use pipeline::{DispatchPipeline, EvaluationReport, GateBundle, MiBundle};

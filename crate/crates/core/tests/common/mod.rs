//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use migate::dataset::{save_recording, synthesize_recording, SynthSpec, TrialSet};
use migate::pipeline::{prepare_subject, PreprocessConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Subject 1: 10 Hz lateralised bursts plus eye blinks. Subject 2: 22 Hz
/// bursts, no blinks.
pub fn subject_specs(trials_per_class: usize) -> [SynthSpec; 2] {
    let mut s1 = SynthSpec::lateralized(250.0, 10.0, 5.0, trials_per_class);
    s1.blink_rate_hz = 0.2;
    s1.session = "S1".into();
    let mut s2 = SynthSpec::lateralized(250.0, 22.0, 5.0, trials_per_class);
    s2.session = "S2".into();
    [s1, s2]
}

pub fn synthetic_subjects(trials_per_class: usize, seed: u64) -> [TrialSet; 2] {
    let [s1, s2] = subject_specs(trials_per_class);
    let pre = PreprocessConfig::default();
    let r1 = synthesize_recording(&s1, seed).unwrap();
    let r2 = synthesize_recording(&s2, seed + 1).unwrap();
    [
        prepare_subject(&[r1], &pre, 1).unwrap(),
        prepare_subject(&[r2], &pre, 2).unwrap(),
    ]
}

/// Writes both subjects' recordings and a run config under `dir`; returns
/// the config path.
pub fn write_synthetic_run(dir: &Path, trials_per_class: usize, seed: u64) -> PathBuf {
    let specs = subject_specs(trials_per_class);
    for (i, spec) in specs.iter().enumerate() {
        let rec = synthesize_recording(spec, seed + i as u64).unwrap();
        let sub = dir.join("data").join(format!("sub{}", i + 1));
        std::fs::create_dir_all(&sub).unwrap();
        save_recording(&rec, &sub, &spec.session).unwrap();
    }
    let cfg = serde_json::json!({
        "data_dir": "data",
        "out_dir": "out",
        "subjects": [
            {"id": 1, "dir": "sub1", "ica": true, "classifier": {"kind": "lda"}},
            {"id": 2, "dir": "sub2", "ica": false, "classifier": {"kind": "logreg"}}
        ],
        "gate": {"kind": "ensemble"},
        "pipeline": {"seed": 7}
    });
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

// ICA scenes

pub const N: usize = 5000;

pub fn ica_sources(seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    Array2::from_shape_fn((N, 3), |(i, j)| {
        let t = i as f64 / 250.0;
        match j {
            0 => (2.0 * PI * 7.0 * t + phase).sin(),
            1 => (((3.0 * t) % 1.0) * 2.0 - 1.0) * 1.7,
            _ => {
                // Laplace via difference of exponentials
                let u: f64 = rng.random_range(1e-12..1.0);
                let v: f64 = rng.random_range(1e-12..1.0);
                (u.ln() - v.ln()) / 2f64.sqrt()
            }
        }
    })
}

pub fn random_mixing(rng: &mut ChaCha8Rng) -> Array2<f64> {
    loop {
        let a: Array2<f64> = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));
        let det = a[[0, 0]] * (a[[1, 1]] * a[[2, 2]] - a[[1, 2]] * a[[2, 1]])
            - a[[0, 1]] * (a[[1, 0]] * a[[2, 2]] - a[[1, 2]] * a[[2, 0]])
            + a[[0, 2]] * (a[[1, 0]] * a[[2, 1]] - a[[1, 1]] * a[[2, 0]]);
        if det.abs() > 0.2 {
            return a;
        }
    }
}

/// Brain activity with a blink waveform leaking into every EEG channel.
pub fn blink_scene(seed: u64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blink = Array1::<f64>::zeros(N);
    for _ in 0..20 {
        let c = rng.random_range(50..N - 50) as f64;
        for (i, b) in blink.iter_mut().enumerate() {
            *b += 80.0 * (-0.5 * ((i as f64 - c) / 10.0).powi(2)).exp();
        }
    }
    let s = ica_sources(seed);
    let mixing = random_mixing(&mut rng);
    let brain = s.slice(ndarray::s![.., 0..2]).dot(&mixing.slice(ndarray::s![0..2, ..])) * 5.0;
    let gains = [0.3, 0.4, 0.25];
    let mut eeg = brain.clone();
    for (j, g) in gains.iter().enumerate() {
        eeg.column_mut(j).scaled_add(*g, &blink);
    }
    let noise = Normal::new(0.0, 1.0).unwrap();
    let eog = Array2::from_shape_fn((N, 3), |(i, j)| [1.0, 0.8, 0.6][j] * blink[i] + noise.sample(&mut rng));
    (brain, eeg, eog)
}

pub fn rms(a: &Array2<f64>) -> f64 {
    (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt()
}

use migate::dataset::{
    epoch_trials, load_recording, save_recording, split_indices, synthesize_recording, train_test_split, ChannelInfo,
    ChannelKind, DatasetError, Event, Recording, SynthSpec,
};
use migate::stats::pearson;
use ndarray::Array2;
use proptest::prelude::*;

fn six_channels() -> Vec<ChannelInfo> {
    ["C3", "Cz", "C4", "EOG1", "EOG2", "EOG3"]
        .iter()
        .enumerate()
        .map(|(index, name)| ChannelInfo {
            name: name.to_string(),
            kind: if index < 3 { ChannelKind::Eeg } else { ChannelKind::Eog },
            index,
        })
        .collect()
}

fn recording(n: usize, events: Vec<Event>) -> Recording {
    let samples = Array2::from_shape_fn((n, 6), |(i, j)| ((i * 7 + j * 13) % 101) as f32 as f64 - 50.0);
    Recording::new(250.0, six_channels(), samples, events, "r").unwrap()
}

#[test]
fn header_size_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let rec = recording(1000, vec![Event { onset: 10, label: 0 }]);
    let header = save_recording(&rec, dir.path(), "r").unwrap();
    assert_eq!(std::fs::metadata(dir.path().join("r.f32")).unwrap().len(), 24000);
    let back = load_recording(&header).unwrap();
    assert_eq!(back.samples.dim(), (1000, 6));

    let bytes = std::fs::read(dir.path().join("r.f32")).unwrap();
    std::fs::write(dir.path().join("r.f32"), &bytes[..23996]).unwrap();
    assert!(matches!(
        load_recording(&header),
        Err(DatasetError::SampleSizeMismatch {
            expected: 24000,
            actual: 23996
        })
    ));
}

#[test]
fn malformed_and_non_finite_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let rec = recording(20, vec![]);
    let header = save_recording(&rec, dir.path(), "r").unwrap();
    let text = std::fs::read_to_string(&header).unwrap();
    std::fs::write(&header, text.replace("\"fs\"", "\"fz\"")).unwrap();
    assert!(matches!(load_recording(&header), Err(DatasetError::MalformedHeader(_))));

    let header = save_recording(&rec, dir.path(), "r").unwrap();
    let mut bytes = std::fs::read(dir.path().join("r.f32")).unwrap();
    bytes[4 * 13..4 * 14].copy_from_slice(&f32::NAN.to_le_bytes());
    std::fs::write(dir.path().join("r.f32"), bytes).unwrap();
    assert!(matches!(
        load_recording(&header),
        Err(DatasetError::NonFiniteSample { sample: 2, channel: 1 })
    ));
}

#[test]
fn epoching_windows() {
    let rec = recording(
        2000,
        vec![Event { onset: 100, label: 0 }, Event { onset: 900, label: 1 }],
    );
    let ts = epoch_trials(&rec, 0.5, 3.5, 4).unwrap();
    assert_eq!(ts.len(), 2);
    assert_eq!(ts.trials[0].data.dim(), (750, 6));
    assert_eq!(ts.trials[1].data.row(0), rec.samples.row(900 + 125));
    assert_eq!(ts.labels(), vec![0, 1]);
    assert_eq!(ts.trials[0].subject_id, 4);

    let late = recording(2000, vec![Event { onset: 1990, label: 0 }]);
    assert!(matches!(
        epoch_trials(&late, 0.5, 3.5, 0),
        Err(DatasetError::WindowOutOfRange { .. })
    ));
}

#[test]
fn split_sizes_and_errors() {
    let (train, test) = split_indices(100, 0.8, 3).unwrap();
    assert_eq!((train.len(), test.len()), (80, 20));
    assert_eq!(split_indices(100, 0.8, 3).unwrap(), (train, test));
    assert!(matches!(
        split_indices(5, 0.1, 0),
        Err(DatasetError::DegenerateSplit { train: 0, test: 5 })
    ));
    assert!(matches!(
        split_indices(5, 1.0, 0),
        Err(DatasetError::InvalidFraction(_))
    ));
}

#[test]
fn synthesis_is_deterministic_and_validated() {
    let spec = SynthSpec::lateralized(250.0, 10.0, 5.0, 5);
    let a = synthesize_recording(&spec, 9).unwrap();
    let b = synthesize_recording(&spec, 9).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.events, b.events);
    assert_ne!(a.samples, synthesize_recording(&spec, 10).unwrap().samples);

    let mut bad = spec.clone();
    bad.fs = -1.0;
    assert!(matches!(
        synthesize_recording(&bad, 0),
        Err(DatasetError::InvalidSpec(_))
    ));
    let mut bad = spec;
    bad.trials_per_class = 0;
    assert!(matches!(
        synthesize_recording(&bad, 0),
        Err(DatasetError::InvalidSpec(_))
    ));
}

#[test]
fn blink_free_eog_is_uncorrelated_with_eeg() {
    let spec = SynthSpec::lateralized(250.0, 10.0, 5.0, 10);
    let mut below = 0;
    for seed in 0..100 {
        let rec = synthesize_recording(&spec, seed).unwrap();
        let mut worst: f64 = 0.0;
        for e in rec.indices_of(ChannelKind::Eeg) {
            for o in rec.indices_of(ChannelKind::Eog) {
                worst = worst.max(pearson(rec.samples.column(e), rec.samples.column(o)).abs());
            }
        }
        if worst < 0.2 {
            below += 1;
        }
    }
    assert!(below >= 95, "{below} of 100 seeds");
}

#[test]
fn blinks_correlate_eeg_with_eog() {
    let mut spec = SynthSpec::lateralized(250.0, 10.0, 5.0, 10);
    spec.blink_rate_hz = 0.5;
    let rec = synthesize_recording(&spec, 1).unwrap();
    let r = pearson(rec.samples.column(1), rec.samples.column(3));
    assert!(r > 0.5, "{r}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn save_load_round_trip(n in 1usize..200, onsets in prop::collection::vec((0usize..200, 0i64..2), 0..5), seed in any::<u64>()) {
        let events: Vec<Event> = onsets.into_iter().filter(|(o, _)| *o < n).map(|(onset, label)| Event { onset, label }).collect();
        let mut rec = recording(n, events);
        rec.samples.mapv_inplace(|v| ((v * (seed % 97) as f64) as f32) as f64);
        let dir = tempfile::tempdir().unwrap();
        let back = load_recording(save_recording(&rec, dir.path(), "r").unwrap()).unwrap();
        prop_assert_eq!(back.fs, rec.fs);
        prop_assert_eq!(&back.channels, &rec.channels);
        prop_assert_eq!(&back.events, &rec.events);
        prop_assert!(back.samples.iter().zip(rec.samples.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn split_is_a_partition(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
        match split_indices(n, frac, seed) {
            Ok((train, test)) => {
                prop_assert_eq!(train.len(), (frac * n as f64 + 1e-9).floor() as usize);
                let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
            Err(DatasetError::DegenerateSplit { train, test }) => prop_assert!(train == 0 || test == 0),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn epoching_preserves_event_count(k in 0usize..6, seed in 0u64..50) {
        let events: Vec<Event> = (0..k).map(|i| Event { onset: 100 + 300 * i, label: ((i as u64 + seed) % 2) as i64 }).collect();
        let rec = recording(3000, events);
        if k == 0 {
            prop_assert!(epoch_trials(&rec, 0.5, 3.5, 0).is_err());
        } else {
            let ts = epoch_trials(&rec, 0.5, 3.5, 0).unwrap();
            prop_assert_eq!(ts.len(), k);
            let (tr, te) = match train_test_split(&ts, 0.5, seed) {
                Ok(p) => p,
                Err(_) => return Ok(()),
            };
            prop_assert_eq!(tr.len() + te.len(), k);
        }
    }
}

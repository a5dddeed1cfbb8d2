"""Smoke test for the migate Python bindings.

Build first: ``maturin develop -m crates/py/Cargo.toml`` (or install a wheel).
"""

import json
import math
import os
import sys
import tempfile

import migate


def spec(freq, session, n=30):
    return json.dumps({
        "fs": 250.0,
        "trials_per_class": n,
        "classes": [
            {"frequency_hz": freq, "amplitude_uv": 5.0, "channel": "C3"},
            {"frequency_hz": freq, "amplitude_uv": 5.0, "channel": "C4"},
        ],
        "noise_sigma_uv": 1.0,
        "blink_rate_hz": 0.2,
        "session": session,
    })


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    return cond


def main():
    ok = True

    f = migate.BandpassFilter(4, 8.0, 30.0, 250.0)
    ok &= check(f.is_stable(), "filter is stable")
    ok &= check(abs(f.gain_db(15.0)) < 0.5, "passband gain near 0 dB")
    ok &= check(f.gain_db(2.0) < -20.0, "stopband attenuated")

    fs = 250.0
    x = [math.sin(2 * math.pi * 12.0 * i / fs) for i in range(2500)]
    freqs, power = migate.welch_psd(x, fs)
    total = migate.band_power(freqs, power, 10.0, 14.0)
    ok &= check(abs(total - 0.5) < 0.05, f"sine power {total:.3f} close to 0.5")

    r1 = migate.Recording.synthesize(spec(10.0, "S1"), seed=1)
    r2 = migate.Recording.synthesize(spec(22.0, "S2"), seed=2)
    ok &= check(len(r1.events) == 60, "synthetic events")

    with tempfile.TemporaryDirectory() as d:
        header = r1.save(d, "S1")
        back = migate.Recording.load(header)
        ok &= check(back.samples() == r1.samples(), "save/load roundtrip")

    eeg_idx = [i for i, n in enumerate(r1.channel_names) if n not in r1.eog_channels]
    eeg = [[row[i] for i in eeg_idx] for row in r1.samples()[:5000]]
    model = migate.fast_ica(eeg, 3, seed=0)
    ok &= check(len(model.sources(eeg)[0]) == 3, f"ica components (converged={model.converged})")

    t1 = migate.TrialSet.prepare([r1], 1)
    t2 = migate.TrialSet.prepare([r2], 2)
    ok &= check(len(t1) == 60 and t1.subject_id == 1, repr(t1))

    xs = [[sum(v * v for v in row) for row in zip(*t1.trial(i))] for i in range(len(t1))]
    clf = migate.Classifier.fit('{"kind": "gnb"}', xs, t1.labels())
    ok &= check(len(clf.predict(xs)) == len(xs), "classifier fit/predict")
    again = migate.Classifier.from_json(clf.to_json())
    ok &= check(again.predict(xs) == clf.predict(xs), "classifier json roundtrip")

    p = migate.Pipeline.train(t1, t2, config='{"seed": 7}')
    report = json.loads(p.report)
    accs = {t["task"]: t["test_accuracy"] for t in report["tasks"]}
    ok &= check(min(accs.values()) >= 90.0, f"test accuracies {accs}")

    gate_label, subject, labels = p.dispatch(t2, list(range(5)))
    ok &= check(subject == 2 and len(labels) == 5, f"dispatch routed to subject {subject}")

    disp = json.loads(p.evaluate(t1, t2))
    ok &= check(disp["routing_accuracy"] >= 90.0, f"routing accuracy {disp['routing_accuracy']:.1f}")

    try:
        migate.Classifier.fit('{"kind": "nope"}', xs, t1.labels())
        ok &= check(False, "bad config rejected")
    except ValueError:
        ok &= check(True, "bad config rejected")

    ok &= check(migate.run_cli(["convert"]) == 2, "cli convert exits 2")

    print("smoke test", "passed" if ok else "FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

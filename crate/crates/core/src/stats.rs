//! Small descriptive statistics shared across modules.

use ndarray::{ArrayView1, ArrayView2};

pub fn mean(x: ArrayView1<'_, f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.sum() / x.len() as f64
}

/// Population variance (divisor `n`).
pub fn variance(x: ArrayView1<'_, f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Pearson correlation. A zero-variance input yields 0 rather than NaN.
pub fn pearson(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Largest |Pearson r| between any column of `a` and any column of `b`.
pub fn max_abs_cross_correlation(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let mut best = 0.0_f64;
    for ca in a.columns() {
        for cb in b.columns() {
            best = best.max(pearson(ca, cb).abs());
        }
    }
    best
}

/// Modal label of a binary vote; ties go to 0.
pub fn binary_mode(votes: &[u8]) -> u8 {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    u8::from(ones * 2 > votes.len())
}

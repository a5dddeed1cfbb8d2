//! IIR band-pass design, zero-phase filtering and Welch spectra.
//!
//! Band-pass filters are Butterworth designs obtained from the analog
//! low-pass prototype through the low-pass → band-pass substitution and the
//! bilinear transform with pre-warped band edges. The result is kept as a
//! cascade of second-order sections. `order` always refers to the order of
//! the band-pass filter itself (number of poles), so an order-4 design has a
//! second-order prototype and two sections.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("invalid band [{low_hz}, {high_hz}] Hz for fs = {fs} Hz")]
    InvalidBand { low_hz: f64, high_hz: f64, fs: f64 },
    #[error("unsupported filter order {0}; expected one of 2, 4, 6, 8")]
    UnsupportedOrder(usize),
    #[error("signal of {len} samples too short; need more than {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error("segment of {segment} samples longer than signal of {len}")]
    SegmentTooLong { segment: usize, len: usize },
    #[error("invalid Welch parameters: {0}")]
    InvalidWelch(String),
    #[error("no spectral grid points inside [{low_hz}, {high_hz}] Hz")]
    EmptyBand { low_hz: f64, high_hz: f64 },
}

pub type Result<T> = std::result::Result<T, DspError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    pub const fn new(low_hz: f64, high_hz: f64) -> Self {
        Self { low_hz, high_hz }
    }

    /// `0 < low < high < fs/2`
    pub fn validate(&self, fs: f64) -> Result<()> {
        if self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < fs / 2.0 && fs.is_finite() {
            Ok(())
        } else {
            Err(DspError::InvalidBand {
                low_hz: self.low_hz,
                high_hz: self.high_hz,
                fs,
            })
        }
    }
}

/// `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    /// Direct-form II transposed state that a unit step settles into.
    fn step_state(&self) -> [f64; 2] {
        let g = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        let z2 = self.b2 - self.a2 * g;
        [self.b1 - self.a1 * g + z2, z2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub sections: Vec<Biquad>,
    pub gain: f64,
    pub order: usize,
}

impl FilterCoefficients {
    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64, fs: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_hz / fs);
        self.sections
            .iter()
            .fold(Complex64::new(self.gain, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Sections with the overall gain folded into the first one.
    fn folded(&self) -> Vec<Biquad> {
        let mut out = self.sections.clone();
        if let Some(first) = out.first_mut() {
            first.b0 *= self.gain;
            first.b1 *= self.gain;
            first.b2 *= self.gain;
        }
        out
    }

    /// Samples of odd-reflection padding added at each edge by
    /// [`filter_zero_phase`].
    pub fn pad_len(&self) -> usize {
        3 * self.order
    }
}

pub fn design_butterworth_bandpass(order: usize, band: BandSpec, fs: f64) -> Result<FilterCoefficients> {
    if !matches!(order, 2 | 4 | 6 | 8) {
        return Err(DspError::UnsupportedOrder(order));
    }
    band.validate(fs)?;
    let n = order / 2;
    let fs2 = 2.0 * fs;
    let wl = fs2 * (PI * band.low_hz / fs).tan();
    let wh = fs2 * (PI * band.high_hz / fs).tan();
    let bw = wh - wl;
    let w0_sq = wl * wh;

    let mut analog = Vec::with_capacity(order);
    for k in 0..n {
        let p = Complex64::from_polar(1.0, PI * (2 * k + n + 1) as f64 / (2 * n) as f64);
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0_sq).sqrt();
        analog.push((pb + disc) / 2.0);
        analog.push((pb - disc) / 2.0);
    }
    // n analog zeros at s = 0 map to z = 1; the n at infinity map to z = -1
    let mut gain = Complex64::new(bw.powi(n as i32) * fs2.powi(n as i32), 0.0);
    let mut digital = Vec::with_capacity(order);
    for &s in &analog {
        gain /= fs2 - s;
        digital.push((fs2 + s) / (fs2 - s));
    }

    let eps = 1e-12;
    let mut upper: Vec<Complex64> = digital.iter().copied().filter(|p| p.im > eps).collect();
    let mut real: Vec<f64> = digital.iter().filter(|p| p.im.abs() <= eps).map(|p| p.re).collect();
    real.sort_by(f64::total_cmp);
    let mut sections = Vec::with_capacity(n);
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    for p in upper {
        sections.push(Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -2.0 * p.re,
            a2: p.norm_sqr(),
        });
    }
    for pair in real.chunks(2) {
        let (r1, r2) = (pair[0], pair[1]);
        sections.push(Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -(r1 + r2),
            a2: r1 * r2,
        });
    }
    // poles nearest the unit circle last
    sections.sort_by(|a, b| {
        let ra = a.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
        let rb = b.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
        ra.total_cmp(&rb)
    });
    debug_assert_eq!(sections.len(), n);
    Ok(FilterCoefficients {
        sections,
        gain: gain.re,
        order,
    })
}

fn sos_filter(sections: &[Biquad], x: &[f64], init: &[[f64; 2]]) -> Vec<f64> {
    let mut y = x.to_vec();
    for (s, z0) in sections.iter().zip(init) {
        let (mut z1, mut z2) = (z0[0], z0[1]);
        for v in y.iter_mut() {
            let xin = *v;
            let out = s.b0 * xin + z1;
            z1 = s.b1 * xin - s.a1 * out + z2;
            z2 = s.b2 * xin - s.a2 * out;
            *v = out;
        }
    }
    y
}

/// Initial states for a cascade fed by a constant `level`.
fn steady_states(sections: &[Biquad], level: f64) -> Vec<[f64; 2]> {
    let mut scale = level;
    sections
        .iter()
        .map(|s| {
            let z = s.step_state();
            let out = [z[0] * scale, z[1] * scale];
            scale *= s.dc_gain();
            out
        })
        .collect()
}

/// Forward-backward filtering with odd-reflection edge padding.
///
/// The magnitude response is squared and the phase cancels. Each pass starts
/// from the steady state matching its first (padded) sample.
pub fn filter_zero_phase(x: &[f64], c: &FilterCoefficients) -> Result<Vec<f64>> {
    let pad = c.pad_len();
    let n = x.len();
    if n <= pad || n < 2 {
        return Err(DspError::SignalTooShort {
            len: n,
            needed: pad.max(1),
        });
    }
    let sections = c.folded();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let fwd = sos_filter(&sections, &ext, &steady_states(&sections, ext[0]));
    let mut rev: Vec<f64> = fwd.into_iter().rev().collect();
    rev = sos_filter(&sections, &rev, &steady_states(&sections, rev[0]));
    rev.reverse();
    Ok(rev[pad..pad + n].to_vec())
}

/// One-sided power spectral density, µV²/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
}

impl Psd {
    pub fn resolution(&self) -> f64 {
        if self.freqs_hz.len() > 1 {
            self.freqs_hz[1] - self.freqs_hz[0]
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelchParams {
    pub segment_s: f64,
    pub overlap: f64,
}

impl Default for WelchParams {
    fn default() -> Self {
        Self {
            segment_s: 1.0,
            overlap: 0.5,
        }
    }
}

/// Hann-windowed Welch estimator with a cached FFT plan.
pub struct WelchEstimator {
    fs: f64,
    segment: usize,
    step: usize,
    window: Vec<f64>,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl WelchEstimator {
    pub fn new(fs: f64, params: WelchParams) -> Result<Self> {
        if !(params.overlap >= 0.0 && params.overlap < 1.0) {
            return Err(DspError::InvalidWelch(format!(
                "overlap {} outside [0, 1)",
                params.overlap
            )));
        }
        if !(fs > 0.0 && params.segment_s > 0.0) {
            return Err(DspError::InvalidWelch("fs and segment length must be positive".into()));
        }
        let segment = (params.segment_s * fs).round() as usize;
        if segment < 2 {
            return Err(DspError::InvalidWelch(format!("segment of {segment} samples")));
        }
        let overlap = (params.overlap * segment as f64).round() as usize;
        let step = (segment - overlap.min(segment - 1)).max(1);
        let window: Vec<f64> = (0..segment)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / segment as f64).cos())
            .collect();
        let scale = 1.0 / (fs * window.iter().map(|w| w * w).sum::<f64>());
        let fft = FftPlanner::new().plan_fft_forward(segment);
        Ok(Self {
            fs,
            segment,
            step,
            window,
            scale,
            fft,
        })
    }

    pub fn segment_len(&self) -> usize {
        self.segment
    }

    pub fn estimate(&self, x: &[f64]) -> Result<Psd> {
        let n = self.segment;
        if n > x.len() {
            return Err(DspError::SegmentTooLong {
                segment: n,
                len: x.len(),
            });
        }
        let n_bins = n / 2 + 1;
        let mut power = vec![0.0; n_bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut count = 0usize;
        let mut start = 0;
        while start + n <= x.len() {
            let seg = &x[start..start + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new((v - mean) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (p, b) in power.iter_mut().zip(&buf) {
                *p += b.norm_sqr();
            }
            count += 1;
            start += self.step;
        }
        let norm = self.scale / count as f64;
        for (k, p) in power.iter_mut().enumerate() {
            let one_sided = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            *p *= norm * one_sided;
        }
        let freqs_hz = (0..n_bins).map(|k| k as f64 * self.fs / n as f64).collect();
        Ok(Psd { freqs_hz, power })
    }
}

pub fn welch_psd(x: &[f64], fs: f64, segment_s: f64, overlap_fraction: f64) -> Result<Psd> {
    WelchEstimator::new(
        fs,
        WelchParams {
            segment_s,
            overlap: overlap_fraction,
        },
    )?
    .estimate(x)
}

/// Integral of the piecewise-linear interpolant of `p` over the band,
/// clipped to the grid. Errors when no grid frequency lies in the band.
pub fn band_power(p: &Psd, band: BandSpec) -> Result<f64> {
    let f = &p.freqs_hz;
    let empty = DspError::EmptyBand {
        low_hz: band.low_hz,
        high_hz: band.high_hz,
    };
    if f.is_empty() || !(band.high_hz > band.low_hz) {
        return Err(empty);
    }
    let lo = band.low_hz.max(f[0]);
    let hi = band.high_hz.min(f[f.len() - 1]);
    if !f.iter().any(|&v| v >= lo && v <= hi) || hi <= lo {
        return Err(empty);
    }
    let interp = |x: f64| -> f64 {
        let i = f.partition_point(|&v| v <= x).clamp(1, f.len() - 1);
        let (f0, f1) = (f[i - 1], f[i]);
        let t = (x - f0) / (f1 - f0);
        p.power[i - 1] + t * (p.power[i] - p.power[i - 1])
    };
    let mut knots = vec![lo];
    knots.extend(f.iter().copied().filter(|&v| v > lo && v < hi));
    knots.push(hi);
    let mut total = 0.0;
    for w in knots.windows(2) {
        total += 0.5 * (w[1] - w[0]) * (interp(w[0]) + interp(w[1]));
    }
    Ok(total.max(0.0))
}

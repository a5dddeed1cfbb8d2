//! FastICA and EOG-guided artifact removal.
//!
//! The decomposition centres the data, whitens it from the eigendecomposition
//! of the channel covariance, then runs the symmetric fixed-point iteration
//! with a `tanh` contrast. Components are sorted by the energy of their
//! back-projection (largest first) and sign-normalised so that the largest
//! entry of each mixing column is positive.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{sym_eigh, sym_inv_sqrt};
use crate::stats::pearson;

#[derive(Debug, Error, PartialEq)]
pub enum IcaError {
    #[error("cannot extract {k} components from {n_channels} channels and {n_samples} samples")]
    InvalidComponents {
        k: usize,
        n_channels: usize,
        n_samples: usize,
    },
    #[error("covariance rank {rank} below requested {k} components")]
    SingularCovariance { rank: usize, k: usize },
    #[error("FastICA did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("eeg has {eeg} samples, eog has {eog}")]
    LengthMismatch { eeg: usize, eog: usize },
    #[error("component index {index} out of range for {k} components")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("input contains non-finite values")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, IcaError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcaParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IcaParams {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    /// Per-channel means removed before whitening.
    pub means: Array1<f64>,
    /// `[k × n_ch]`
    pub whitening: Array2<f64>,
    /// `[k × k]`, orthogonal.
    pub unmixing: Array2<f64>,
    /// `[n_ch × k]`, pseudo-inverse of `unmixing · whitening`.
    pub mixing: Array2<f64>,
    pub n_iter: usize,
    pub converged: bool,
}

impl IcaModel {
    pub fn n_components(&self) -> usize {
        self.unmixing.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.means.len()
    }

    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(IcaError::NoConvergence {
                iterations: self.n_iter,
            })
        }
    }

    /// Combined source filter `unmixing · whitening`, `[k × n_ch]`.
    pub fn filters(&self) -> Array2<f64> {
        self.unmixing.dot(&self.whitening)
    }

    /// Source time courses `[n_samples × k]`.
    pub fn sources(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_channels(x.ncols())?;
        let centred = &x - &self.means;
        Ok(centred.dot(&self.filters().t()))
    }

    fn check_channels(&self, got: usize) -> Result<()> {
        if got == self.n_channels() {
            Ok(())
        } else {
            Err(IcaError::ChannelMismatch {
                expected: self.n_channels(),
                got,
            })
        }
    }
}

/// Fits FastICA with `k` components. A model that hits `max_iter` is still
/// returned, with `converged == false`.
pub fn fast_ica(eeg: ArrayView2<'_, f64>, k: usize, seed: u64, tol: f64, max_iter: usize) -> Result<IcaModel> {
    let (n, n_ch) = eeg.dim();
    if k == 0 || k > n_ch || n_ch > n {
        return Err(IcaError::InvalidComponents {
            k,
            n_channels: n_ch,
            n_samples: n,
        });
    }
    if eeg.iter().any(|v| !v.is_finite()) {
        return Err(IcaError::NonFinite);
    }
    let means = eeg.mean_axis(Axis(0)).expect("non-empty");
    let x = &eeg - &means;
    let cov = x.t().dot(&x) / n as f64;
    let (vals, vecs) = sym_eigh(cov.view());
    let top = vals[0].max(0.0);
    let rank = vals.iter().filter(|&&v| v > 1e-10 * top && v > 0.0).count();
    if rank < k {
        return Err(IcaError::SingularCovariance { rank, k });
    }
    let whitening = Array2::from_shape_fn((k, n_ch), |(i, c)| vecs[[c, i]] / vals[i].sqrt());
    let z = x.dot(&whitening.t());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Array2::from_shape_fn((k, k), |_| StandardNormal.sample(&mut rng));
    let mut w = decorrelate(&init);
    let mut converged = false;
    let mut n_iter = 0;
    for it in 1..=max_iter {
        n_iter = it;
        let wz = z.dot(&w.t());
        let g = wz.mapv(f64::tanh);
        let g_prime_mean = g.mapv(|v| 1.0 - v * v).mean_axis(Axis(0)).expect("non-empty");
        let mut w_new = g.t().dot(&z) / n as f64;
        for i in 0..k {
            for j in 0..k {
                w_new[[i, j]] -= g_prime_mean[i] * w[[i, j]];
            }
        }
        let w_new = decorrelate(&w_new);
        let lim = (0..k)
            .map(|i| (1.0 - w_new.row(i).dot(&w.row(i)).abs()).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if lim < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("FastICA stopped after {n_iter} iterations without reaching tol {tol}");
    }

    // mixing = pinv(W K) = E_k D_k^{1/2} Wᵀ
    let dewhiten = Array2::from_shape_fn((n_ch, k), |(c, i)| vecs[[c, i]] * vals[i].sqrt());
    let mixing = dewhiten.dot(&w.t());

    let mut order: Vec<usize> = (0..k).collect();
    let energy: Vec<f64> = (0..k).map(|i| mixing.column(i).dot(&mixing.column(i))).collect();
    order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    let mut unmixing = Array2::zeros((k, k));
    let mut mixing_out = Array2::zeros((n_ch, k));
    for (dst, &src) in order.iter().enumerate() {
        let col = mixing.column(src);
        let dominant = col
            .iter()
            .copied()
            .fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if dominant < 0.0 { -1.0 } else { 1.0 };
        unmixing.row_mut(dst).assign(&(&w.row(src) * sign));
        mixing_out.column_mut(dst).assign(&(&col * sign));
    }

    Ok(IcaModel {
        means,
        whitening,
        unmixing,
        mixing: mixing_out,
        n_iter,
        converged,
    })
}

/// `(W Wᵀ)^{-1/2} W`
fn decorrelate(w: &Array2<f64>) -> Array2<f64> {
    sym_inv_sqrt(w.dot(&w.t()).view()).dot(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EogScores {
    /// Per component, the largest |Pearson r| against any EOG channel.
    pub scores: Vec<f64>,
    /// Index (into the EOG matrix columns) of the channel attaining it.
    pub best_channel: Vec<usize>,
    /// Name of that channel, when names were supplied.
    pub best_channel_name: Vec<Option<String>>,
}

impl EogScores {
    pub fn argmax(&self) -> Option<usize> {
        self.scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
    }
}

pub fn score_eog_correlation(
    model: &IcaModel,
    eeg: ArrayView2<'_, f64>,
    eog: ArrayView2<'_, f64>,
    eog_names: &[String],
) -> Result<EogScores> {
    if eeg.nrows() != eog.nrows() {
        return Err(IcaError::LengthMismatch {
            eeg: eeg.nrows(),
            eog: eog.nrows(),
        });
    }
    let sources = model.sources(eeg)?;
    let mut scores = Vec::with_capacity(model.n_components());
    let mut best_channel = Vec::with_capacity(model.n_components());
    for s in sources.columns() {
        let mut best = (0.0_f64, 0usize);
        for (j, e) in eog.columns().into_iter().enumerate() {
            let r = pearson(s, e).abs();
            if r > best.0 {
                best = (r, j);
            }
        }
        scores.push(best.0);
        best_channel.push(best.1);
    }
    let best_channel_name = best_channel.iter().map(|&j| eog_names.get(j).cloned()).collect();
    Ok(EogScores {
        scores,
        best_channel,
        best_channel_name,
    })
}

/// Back-projects every source not in `drop` and re-adds the channel means.
pub fn remove_components(model: &IcaModel, eeg: ArrayView2<'_, f64>, drop: &[usize]) -> Result<Array2<f64>> {
    let k = model.n_components();
    if let Some(&index) = drop.iter().find(|&&i| i >= k) {
        return Err(IcaError::IndexOutOfRange { index, k });
    }
    let mut sources = model.sources(eeg)?;
    for &i in drop {
        sources.column_mut(i).fill(0.0);
    }
    Ok(sources.dot(&model.mixing.t()) + &model.means)
}

/// Which components to drop: the highest-scoring ones at or above
/// `threshold`, at most `max_drop` of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactPolicy {
    pub threshold: f64,
    pub max_drop: usize,
}

impl Default for ArtifactPolicy {
    fn default() -> Self {
        Self {
            threshold: 0.3,
            max_drop: 1,
        }
    }
}

impl ArtifactPolicy {
    pub fn select(&self, scores: &EogScores) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..scores.scores.len())
            .filter(|&i| scores.scores[i] >= self.threshold)
            .collect();
        idx.sort_by(|&a, &b| scores.scores[b].total_cmp(&scores.scores[a]).then(a.cmp(&b)));
        idx.truncate(self.max_drop);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn mixed(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Array2::from_shape_fn((n, 3), |(i, c)| {
            let t = i as f64 / 250.0;
            match c {
                0 => (2.0 * std::f64::consts::PI * 7.0 * t).sin(),
                1 => {
                    if (t * 3.0).fract() < 0.5 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                _ => rng.random_range(-1.0..1.0),
            }
        });
        let a = ndarray::array![[1.0, 0.5, 0.3], [0.2, 1.0, 0.6], [0.4, 0.1, 1.0]];
        s.dot(&a.t())
    }

    #[test]
    fn orthogonal_unmixing_and_unit_sources() {
        let x = mixed(3000, 1);
        let m = fast_ica(x.view(), 3, 7, 1e-4, 200).unwrap();
        assert!(m.converged);
        let wwt = m.unmixing.dot(&m.unmixing.t());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((wwt[[i, j]] - e).abs() < 1e-6);
            }
        }
        let s = m.sources(x.view()).unwrap();
        let cov = s.t().dot(&s) / s.nrows() as f64;
        for i in 0..3 {
            assert!((cov[[i, i]] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_channels_are_singular() {
        let mut x = mixed(1000, 2);
        let c0 = x.column(0).to_owned();
        x.column_mut(1).assign(&c0);
        assert!(matches!(
            fast_ica(x.slice(ndarray::s![.., 0..2]), 2, 0, 1e-4, 200),
            Err(IcaError::SingularCovariance { rank: 1, k: 2 })
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let x = mixed(2000, 3);
        assert_eq!(
            fast_ica(x.view(), 3, 5, 1e-4, 200).unwrap(),
            fast_ica(x.view(), 3, 5, 1e-4, 200).unwrap()
        );
    }

    #[test]
    fn removal_identity_and_all() {
        let x = mixed(2000, 4);
        let m = fast_ica(x.view(), 3, 1, 1e-4, 200).unwrap();
        let same = remove_components(&m, x.view(), &[]).unwrap();
        for (a, b) in same.iter().zip(x.iter()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
        let means = remove_components(&m, x.view(), &[0, 1, 2]).unwrap();
        for row in means.rows() {
            for (v, mu) in row.iter().zip(m.means.iter()) {
                assert!((v - mu).abs() < 1e-9);
            }
        }
        assert_eq!(
            remove_components(&m, x.view(), &[3]),
            Err(IcaError::IndexOutOfRange { index: 3, k: 3 })
        );
    }

    #[test]
    fn zero_eog_scores_zero_and_length_checked() {
        let x = mixed(1000, 5);
        let m = fast_ica(x.view(), 3, 1, 1e-4, 200).unwrap();
        let eog = Array2::zeros((1000, 3));
        let sc = score_eog_correlation(&m, x.view(), eog.view(), &[]).unwrap();
        assert!(sc.scores.iter().all(|&s| s == 0.0));
        let short = Array2::zeros((999, 3));
        assert_eq!(
            score_eog_correlation(&m, x.view(), short.view(), &[]),
            Err(IcaError::LengthMismatch { eeg: 1000, eog: 999 })
        );
    }

    #[test]
    fn policy_threshold() {
        let sc = EogScores {
            scores: vec![0.2, 0.9, 0.5],
            best_channel: vec![0; 3],
            best_channel_name: vec![None; 3],
        };
        assert_eq!(ArtifactPolicy::default().select(&sc), vec![1]);
        let p = ArtifactPolicy {
            threshold: 0.3,
            max_drop: 3,
        };
        assert_eq!(p.select(&sc), vec![1, 2]);
        let p = ArtifactPolicy {
            threshold: 0.95,
            max_drop: 1,
        };
        assert!(p.select(&sc).is_empty());
    }
}

//! Trial → feature vector extraction, standardisation and PCA.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ChannelInfo, Trial, TrialSet};
use crate::dsp::{band_power, BandSpec, DspError, WelchEstimator, WelchParams};
use crate::linalg::{svd, sym_eigh, sym_inv_sqrt};

/// Floor applied before every logarithm of a power or variance (µV²).
pub const LOG_POWER_FLOOR: f64 = 1e-12;
/// Floor on standard deviations in [`Standardizer`].
pub const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("channel {0} not present in trial layout")]
    MissingChannel(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("only one class present")]
    SingleClass,
    #[error("class covariance is singular")]
    SingularCovariance,
    #[error("invalid number of CSP filters {m} for {n_channels} channels (must be even, 2..=n_channels)")]
    InvalidFilterCount { m: usize, n_channels: usize },
    #[error("shape mismatch: expected {expected} columns, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("requested {k} components but data supports at most {max}")]
    RankTooLow { k: usize, max: usize },
    #[error("non-finite feature value")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subband {
    pub name: String,
    pub band: BandSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubbandLayout {
    pub bands: Vec<Subband>,
    pub channels: Vec<String>,
}

impl SubbandLayout {
    /// Alpha 8–14 Hz and beta 14–30 Hz, each split into four equal sub-bands.
    pub fn default_bands() -> Vec<Subband> {
        let mut bands = Vec::with_capacity(8);
        for (name, lo, hi) in [("alpha", 8.0, 14.0), ("beta", 14.0, 30.0)] {
            let w = (hi - lo) / 4.0;
            for i in 0..4 {
                bands.push(Subband {
                    name: format!("{name}{}", i + 1),
                    band: BandSpec::new(lo + w * i as f64, lo + w * (i + 1) as f64),
                });
            }
        }
        bands
    }

    pub fn with_channels(channels: &[&str]) -> Self {
        Self {
            bands: Self::default_bands(),
            channels: channels.iter().map(|s| (*s).to_string()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.bands.len() * self.channels.len()
    }

    /// `"<channel>.<band>"`, channels-major.
    pub fn feature_names(&self) -> Vec<String> {
        self.channels
            .iter()
            .flat_map(|c| self.bands.iter().map(move |b| format!("{c}.{}", b.name)))
            .collect()
    }
}

impl Default for SubbandLayout {
    fn default() -> Self {
        Self::with_channels(&["C3", "C4"])
    }
}

fn resolve_channels(layout: &[ChannelInfo], names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            layout
                .iter()
                .position(|c| &c.name == n)
                .ok_or_else(|| FeatureError::MissingChannel(n.clone()))
        })
        .collect()
}

/// Log sub-band power extractor bound to one channel layout.
pub struct SubbandPowerExtractor<'a> {
    layout: &'a SubbandLayout,
    channel_idx: Vec<usize>,
    welch: WelchEstimator,
}

impl<'a> SubbandPowerExtractor<'a> {
    pub fn new(layout: &'a SubbandLayout, channels: &[ChannelInfo], fs: f64, welch: WelchParams) -> Result<Self> {
        Ok(Self {
            layout,
            channel_idx: resolve_channels(channels, &layout.channels)?,
            welch: WelchEstimator::new(fs, welch)?,
        })
    }

    /// `ln(max(P_band, ε))` per (channel, sub-band), channels-major.
    pub fn extract(&self, data: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let mut out = Vec::with_capacity(self.layout.dim());
        let mut buf = Vec::with_capacity(data.nrows());
        for &c in &self.channel_idx {
            buf.clear();
            buf.extend(data.column(c).iter().copied());
            let psd = self.welch.estimate(&buf).map_err(|e| match e {
                DspError::SegmentTooLong { segment, len } => DspError::SignalTooShort { len, needed: segment },
                other => other,
            })?;
            for sb in &self.layout.bands {
                out.push(band_power(&psd, sb.band)?.max(LOG_POWER_FLOOR).ln());
            }
        }
        Ok(Array1::from_vec(out))
    }
}

pub fn log_subband_power(
    trial: &Trial,
    channels: &[ChannelInfo],
    layout: &SubbandLayout,
    fs: f64,
    welch: WelchParams,
) -> Result<Array1<f64>> {
    SubbandPowerExtractor::new(layout, channels, fs, welch)?.extract(trial.data.view())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspModel {
    /// `[m × n_ch]`, one spatial filter per row, extreme eigenvalues first.
    pub filters: Array2<f64>,
    pub eigvals: Vec<f64>,
}

impl CspModel {
    pub fn new(filters: Array2<f64>, eigvals: Vec<f64>) -> Self {
        Self { filters, eigvals }
    }
}

fn trace_normalised_cov(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("non-empty trial");
    let c = &x - &mean;
    let cov = c.t().dot(&c);
    let tr = cov.diag().sum();
    if tr > 0.0 {
        cov / tr
    } else {
        cov
    }
}

/// Common spatial patterns on the given channel columns of every trial.
///
/// Solves `Σ₀ w = λ (Σ₀ + Σ₁) w` on averaged trace-normalised class
/// covariances and keeps `m/2` filters from each end of the spectrum,
/// interleaved largest, smallest, second largest, ...
pub fn fit_csp(trials: &TrialSet, channel_idx: &[usize], m: usize) -> Result<CspModel> {
    let n_ch = channel_idx.len();
    if m == 0 || m % 2 == 1 || m > n_ch {
        return Err(FeatureError::InvalidFilterCount { m, n_channels: n_ch });
    }
    let mut sums = [Array2::<f64>::zeros((n_ch, n_ch)), Array2::zeros((n_ch, n_ch))];
    let mut counts = [0usize; 2];
    for t in &trials.trials {
        let x = t.data.select(Axis(1), channel_idx);
        sums[t.label as usize] += &trace_normalised_cov(x.view());
        counts[t.label as usize] += 1;
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(FeatureError::SingleClass);
    }
    let s0 = &sums[0] / counts[0] as f64;
    let s1 = &sums[1] / counts[1] as f64;
    let composite = &s0 + &s1;
    let (cvals, _) = sym_eigh(composite.view());
    if !(cvals[n_ch - 1] > 1e-10 * cvals[0]) {
        return Err(FeatureError::SingularCovariance);
    }
    let p = sym_inv_sqrt(composite.view());
    let s0w = p.dot(&s0).dot(&p.t());
    let (vals, vecs) = sym_eigh(s0w.view());
    let all = vecs.t().dot(&p);
    let mut pick = Vec::with_capacity(m);
    for i in 0..m / 2 {
        pick.push(i);
        pick.push(n_ch - 1 - i);
    }
    let filters = all.select(Axis(0), &pick);
    let eigvals = pick.iter().map(|&i| vals[i]).collect();
    Ok(CspModel { filters, eigvals })
}

/// `ln(var(filterᵢ · x))` per filter.
pub fn apply_csp(model: &CspModel, data: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if data.ncols() != model.filters.ncols() {
        return Err(FeatureError::ShapeMismatch {
            expected: model.filters.ncols(),
            got: data.ncols(),
        });
    }
    let proj = data.dot(&model.filters.t());
    Ok(proj
        .columns()
        .into_iter()
        .map(|c| crate::stats::variance(c).max(LOG_POWER_FLOOR).ln())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
    pub feature_names: Vec<String>,
}

/// Per-column z-scoring with statistics frozen at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(FeatureError::TooFewRows(x.nrows()));
        }
        let mean = x.mean_axis(Axis(0)).expect("rows checked");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| s.max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(FeatureError::ShapeMismatch {
                expected: self.mean.len(),
                got: x.ncols(),
            });
        }
        Ok((&x - &self.mean) / &self.std)
    }

    pub fn apply_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.mean.len() {
            return Err(FeatureError::ShapeMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        Ok((&x - &self.mean) / &self.std)
    }
}

pub fn fit_standardizer(x: ArrayView2<'_, f64>) -> Result<Standardizer> {
    Standardizer::fit(x)
}

pub fn apply_standardizer(s: &Standardizer, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    s.apply(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `[k × d]`, orthonormal rows.
    pub components: Array2<f64>,
    pub mean: Array1<f64>,
    /// Descending, `σᵢ² / (n − 1)`.
    pub explained_variance: Vec<f64>,
    /// Set when `k` exceeds the numerical rank of the centred data.
    pub rank_deficient: bool,
}

impl PcaModel {
    pub fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(FeatureError::ShapeMismatch {
                expected: self.mean.len(),
                got: x.ncols(),
            });
        }
        Ok((&x - &self.mean).dot(&self.components.t()))
    }

    pub fn reconstruct(&self, y: ArrayView2<'_, f64>) -> Array2<f64> {
        y.dot(&self.components) + &self.mean
    }
}

/// PCA through the SVD of the centred data.
pub fn fit_pca(x: ArrayView2<'_, f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(FeatureError::TooFewRows(n));
    }
    let max = n.min(d);
    if k == 0 || k > max {
        return Err(FeatureError::RankTooLow { k, max });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite);
    }
    let mean = x.mean_axis(Axis(0)).expect("rows checked");
    let centred = &x - &mean;
    let (_, s, vt) = svd(centred.view());
    let tol = s.first().copied().unwrap_or(0.0) * (n.max(d) as f64) * f64::EPSILON;
    let rank = s.iter().filter(|&&v| v > tol).count();
    let rank_deficient = k > rank || k > n - 1;
    if rank_deficient {
        log::warn!("PCA: {k} components requested, data rank is {rank}");
    }
    Ok(PcaModel {
        components: vt.slice(ndarray::s![0..k, ..]).to_owned(),
        mean,
        explained_variance: s.iter().take(k).map(|v| v * v / (n - 1) as f64).collect(),
        rank_deficient,
    })
}

/// Extractor choice as written in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExtractorConfig {
    LogSubbandPower {
        #[serde(default = "default_channels")]
        channels: Vec<String>,
        #[serde(default)]
        welch: WelchParams,
        #[serde(default = "SubbandLayout::default_bands")]
        bands: Vec<Subband>,
    },
    Csp {
        #[serde(default = "default_csp_channels")]
        channels: Vec<String>,
        #[serde(default = "default_csp_filters")]
        n_filters: usize,
    },
}

fn default_channels() -> Vec<String> {
    vec!["C3".into(), "C4".into()]
}
fn default_csp_channels() -> Vec<String> {
    vec!["C3".into(), "Cz".into(), "C4".into()]
}
fn default_csp_filters() -> usize {
    2
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self::LogSubbandPower {
            channels: default_channels(),
            welch: WelchParams::default(),
            bands: SubbandLayout::default_bands(),
        }
    }
}

impl ExtractorConfig {
    /// Names of the features this configuration will produce.
    pub fn feature_names(&self) -> Vec<String> {
        match self {
            Self::LogSubbandPower { channels, bands, .. } => SubbandLayout {
                bands: bands.clone(),
                channels: channels.clone(),
            }
            .feature_names(),
            Self::Csp { n_filters, .. } => (0..*n_filters).map(|i| format!("csp{i}")).collect(),
        }
    }
}

/// A fitted extractor. Only the CSP variant learns anything from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureExtractor {
    LogSubbandPower { layout: SubbandLayout, welch: WelchParams },
    Csp { channels: Vec<String>, model: CspModel },
}

impl FeatureExtractor {
    pub fn fit(cfg: &ExtractorConfig, train: &TrialSet) -> Result<Self> {
        match cfg {
            ExtractorConfig::LogSubbandPower { channels, welch, bands } => Ok(Self::LogSubbandPower {
                layout: SubbandLayout {
                    bands: bands.clone(),
                    channels: channels.clone(),
                },
                welch: *welch,
            }),
            ExtractorConfig::Csp { channels, n_filters } => {
                let idx = resolve_channels(&train.channels, channels)?;
                Ok(Self::Csp {
                    channels: channels.clone(),
                    model: fit_csp(train, &idx, *n_filters)?,
                })
            }
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        match self {
            Self::LogSubbandPower { layout, .. } => layout.feature_names(),
            Self::Csp { model, .. } => (0..model.filters.nrows()).map(|i| format!("csp{i}")).collect(),
        }
    }

    /// Feature rows for `trials` laid out as `channels` at `fs`.
    pub fn transform_trials(&self, fs: f64, channels: &[ChannelInfo], trials: &[Trial]) -> Result<Array2<f64>> {
        let d = self.feature_names().len();
        let mut x = Array2::zeros((trials.len(), d));
        match self {
            Self::LogSubbandPower { layout, welch } => {
                let ex = SubbandPowerExtractor::new(layout, channels, fs, *welch)?;
                for (row, t) in x.rows_mut().into_iter().zip(trials) {
                    let mut row = row;
                    row.assign(&ex.extract(t.data.view())?);
                }
            }
            Self::Csp { channels: names, model } => {
                let idx = resolve_channels(channels, names)?;
                for (mut row, t) in x.rows_mut().into_iter().zip(trials) {
                    row.assign(&apply_csp(model, t.data.select(Axis(1), &idx).view())?);
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite);
        }
        Ok(x)
    }

    pub fn transform(&self, ts: &TrialSet) -> Result<FeatureMatrix> {
        Ok(FeatureMatrix {
            x: self.transform_trials(ts.fs, &ts.channels, &ts.trials)?,
            y: ts.labels(),
            feature_names: self.feature_names(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ChannelKind;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn chans(names: &[&str]) -> Vec<ChannelInfo> {
        names
            .iter()
            .enumerate()
            .map(|(index, n)| ChannelInfo {
                name: (*n).into(),
                kind: ChannelKind::Eeg,
                index,
            })
            .collect()
    }

    fn trial(data: Array2<f64>, label: u8) -> Trial {
        Trial {
            data,
            label,
            subject_id: 1,
            source_session: "t".into(),
        }
    }

    #[test]
    fn default_layout_is_sixteen() {
        let l = SubbandLayout::default();
        assert_eq!(l.dim(), 16);
        assert_eq!(l.feature_names()[0], "C3.alpha1");
        assert_eq!(l.feature_names()[15], "C4.beta4");
        assert_eq!(l.bands[1].band, BandSpec::new(9.5, 11.0));
        assert_eq!(l.bands[5].band, BandSpec::new(18.0, 22.0));
    }

    #[test]
    fn zero_trial_hits_floor() {
        let t = trial(Array2::zeros((750, 2)), 0);
        let f = log_subband_power(
            &t,
            &chans(&["C3", "C4"]),
            &SubbandLayout::default(),
            250.0,
            WelchParams::default(),
        )
        .unwrap();
        assert_eq!(f.len(), 16);
        assert!(f.iter().all(|&v| v == LOG_POWER_FLOOR.ln()));
    }

    #[test]
    fn missing_channel_and_short_trial() {
        let t = trial(Array2::zeros((750, 2)), 0);
        let layout = SubbandLayout::with_channels(&["C3", "Cz"]);
        assert_eq!(
            log_subband_power(&t, &chans(&["C3", "C4"]), &layout, 250.0, WelchParams::default()),
            Err(FeatureError::MissingChannel("Cz".into()))
        );
        let t = trial(Array2::zeros((100, 2)), 0);
        assert!(matches!(
            log_subband_power(
                &t,
                &chans(&["C3", "C4"]),
                &SubbandLayout::default(),
                250.0,
                WelchParams::default()
            ),
            Err(FeatureError::Dsp(DspError::SignalTooShort { .. }))
        ));
    }

    #[test]
    fn csp_errors_and_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mk =
            |rng: &mut ChaCha8Rng, label| trial(Array2::from_shape_fn((200, 2), |_| StandardNormal.sample(rng)), label);
        let one_class: Vec<Trial> = (0..4).map(|_| mk(&mut rng, 0)).collect();
        let ts = TrialSet::new(
            250.0,
            chans(&["C3", "C4"]),
            one_class,
            crate::dataset::LabelSemantics::Mi,
        )
        .unwrap();
        assert_eq!(fit_csp(&ts, &[0, 1], 2), Err(FeatureError::SingleClass));
        let both: Vec<Trial> = (0..6).map(|i| mk(&mut rng, (i % 2) as u8)).collect();
        let ts = TrialSet::new(250.0, chans(&["C3", "C4"]), both, crate::dataset::LabelSemantics::Mi).unwrap();
        let m = fit_csp(&ts, &[0, 1], 2).unwrap();
        assert_eq!(m.filters.dim(), (2, 2));
        assert!(matches!(
            apply_csp(&m, Array2::zeros((10, 3)).view()),
            Err(FeatureError::ShapeMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn standardizer_cases() {
        let x = array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]];
        let s = fit_standardizer(x.view()).unwrap();
        let z = s.apply(x.view()).unwrap();
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        let m = z.column(0).mean().unwrap();
        let sd = z.column(0).std(0.0);
        assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        assert_eq!(
            fit_standardizer(array![[1.0, 2.0]].view()),
            Err(FeatureError::TooFewRows(1))
        );
        // no refit on held-out data: shifted mean survives
        let shifted = &x + 10.0;
        let zs = s.apply(shifted.view()).unwrap();
        assert!((zs.column(0).mean().unwrap() - 10.0 / s.std[0]).abs() < 1e-12);
    }

    #[test]
    fn pca_axis_aligned() {
        let x = array![
            [-2.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0]
        ];
        let p = fit_pca(x.view(), 1).unwrap();
        assert!((p.components[[0, 0]].abs() - 1.0).abs() < 1e-8);
        assert!(p.components[[0, 1]].abs() < 1e-8 && p.components[[0, 2]].abs() < 1e-8);
        assert!(matches!(
            fit_pca(x.view(), 4),
            Err(FeatureError::RankTooLow { k: 4, max: 3 })
        ));
        assert!(fit_pca(x.view(), 2).unwrap().rank_deficient);
    }
}

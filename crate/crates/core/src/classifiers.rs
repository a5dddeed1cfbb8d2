//! Binary classifiers written from scratch.
//!
//! All models take standardised feature rows and labels in `{0, 1}`. Every
//! decision rule breaks exact ties toward class 0.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::solve_spd;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("only one class present in training labels")]
    SingleClass,
    #[error("each class needs at least {needed} samples, got {got:?}")]
    TooFewSamples { needed: usize, got: [usize; 2] },
    #[error("within-class covariance is singular")]
    SingularCovariance,
    #[error("k = {k} invalid for {n} training rows (must be odd and <= n)")]
    InvalidK { k: usize, n: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("label {0} not in {{0, 1}}")]
    InvalidLabel(u8),
    #[error("expected {expected} features, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("no training rows")]
    Empty,
    #[error("invalid hyperparameter: {0}")]
    InvalidParameter(String),
    #[error("model was trained on features {trained:?}, caller provides {given:?}")]
    FeatureNameMismatch { trained: Vec<String>, given: Vec<String> },
    #[error("model file error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

fn check_xy(x: ArrayView2<'_, f64>, y: &[u8]) -> Result<[usize; 2]> {
    if x.nrows() == 0 {
        return Err(ClassifierError::Empty);
    }
    if x.nrows() != y.len() {
        return Err(ClassifierError::LabelCount {
            rows: x.nrows(),
            labels: y.len(),
        });
    }
    let mut counts = [0usize; 2];
    for &l in y {
        if l > 1 {
            return Err(ClassifierError::InvalidLabel(l));
        }
        counts[l as usize] += 1;
    }
    Ok(counts)
}

fn check_dim(expected: usize, x: ArrayView1<'_, f64>) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(ClassifierError::ShapeMismatch { expected, got: x.len() })
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᵃ)` without overflow.
fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Logistic regression

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRegParams {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 1000,
            l2: 1e-4,
        }
    }
}

/// `p(y = 1 | x) = 1 / (1 + e^{-a})`, `a = θ₀ + θ·x`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegressionModel {
    pub theta0: f64,
    pub theta: Array1<f64>,
}

impl LogisticRegressionModel {
    pub fn zeros(d: usize) -> Self {
        Self {
            theta0: 0.0,
            theta: Array1::zeros(d),
        }
    }

    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> f64 {
        sigmoid(self.theta0 + self.theta.dot(&x))
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> u8 {
        u8::from(self.predict_proba(x) > 0.5)
    }
}

/// Mean cross-entropy plus `l2/2 · ‖θ‖²` (bias unpenalised) and its gradient
/// `(∂/∂θ₀, ∂/∂θ)`.
pub fn logreg_loss_and_grad(
    model: &LogisticRegressionModel,
    x: ArrayView2<'_, f64>,
    y: &[u8],
    l2: f64,
) -> (f64, f64, Array1<f64>) {
    let n = x.nrows() as f64;
    let a = x.dot(&model.theta) + model.theta0;
    let mut loss = 0.0;
    let mut resid = Array1::zeros(a.len());
    for ((r, &ai), &yi) in resid.iter_mut().zip(a.iter()).zip(y) {
        let yi = f64::from(yi);
        loss += softplus(ai) - yi * ai;
        *r = sigmoid(ai) - yi;
    }
    loss = loss / n + 0.5 * l2 * model.theta.dot(&model.theta);
    let g0 = resid.sum() / n;
    let g = x.t().dot(&resid) / n + &(&model.theta * l2);
    (loss, g0, g)
}

/// Full-batch gradient descent from zero weights. Returns the model and the
/// loss recorded before each update plus the final loss.
pub fn fit_logreg_traced(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    params: LogRegParams,
) -> Result<(LogisticRegressionModel, Vec<f64>)> {
    check_xy(x, y)?;
    if !(params.lr > 0.0 && params.l2 >= 0.0) {
        return Err(ClassifierError::InvalidParameter(format!("{params:?}")));
    }
    let mut m = LogisticRegressionModel::zeros(x.ncols());
    let mut trace = Vec::with_capacity(params.epochs + 1);
    for epoch in 0..=params.epochs {
        let (loss, g0, g) = logreg_loss_and_grad(&m, x, y, params.l2);
        if !loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss { epoch });
        }
        trace.push(loss);
        if epoch == params.epochs {
            break;
        }
        m.theta0 -= params.lr * g0;
        m.theta.scaled_add(-params.lr, &g);
    }
    Ok((m, trace))
}

pub fn fit_logreg(x: ArrayView2<'_, f64>, y: &[u8], params: LogRegParams) -> Result<LogisticRegressionModel> {
    fit_logreg_traced(x, y, params).map(|(m, _)| m)
}

// ---------------------------------------------------------------------------
// LDA

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdaParams {
    /// Added to the pooled covariance diagonal; `None` uses
    /// `1e-6 · trace(Σ) / d`.
    #[serde(default)]
    pub ridge: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub mean0: Array1<f64>,
    pub mean1: Array1<f64>,
    /// Pooled within-class covariance including the ridge.
    pub covariance: Array2<f64>,
    pub priors: [f64; 2],
    pub weights: Array1<f64>,
    pub threshold: f64,
}

impl LdaModel {
    pub fn decision(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.weights.dot(&x) - self.threshold
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> u8 {
        u8::from(self.decision(x) > 0.0)
    }
}

pub fn fit_lda(x: ArrayView2<'_, f64>, y: &[u8], params: LdaParams) -> Result<LdaModel> {
    let counts = check_xy(x, y)?;
    if counts[0] == 0 || counts[1] == 0 {
        return Err(ClassifierError::SingleClass);
    }
    if counts[0] < 2 || counts[1] < 2 {
        return Err(ClassifierError::TooFewSamples { needed: 2, got: counts });
    }
    let d = x.ncols();
    let idx = |c: u8| -> Vec<usize> { (0..y.len()).filter(|&i| y[i] == c).collect() };
    let x0 = x.select(Axis(0), &idx(0));
    let x1 = x.select(Axis(0), &idx(1));
    let mean0 = x0.mean_axis(Axis(0)).expect("non-empty");
    let mean1 = x1.mean_axis(Axis(0)).expect("non-empty");
    let c0 = &x0 - &mean0;
    let c1 = &x1 - &mean1;
    let mut cov = (c0.t().dot(&c0) + c1.t().dot(&c1)) / (y.len() - 2).max(1) as f64;
    let ridge = match params.ridge {
        Some(r) if r >= 0.0 => r,
        Some(r) => return Err(ClassifierError::InvalidParameter(format!("ridge {r}"))),
        None => 1e-6 * cov.diag().sum() / d as f64,
    };
    for i in 0..d {
        cov[[i, i]] += ridge;
    }
    let diff = &mean1 - &mean0;
    let weights = solve_spd(cov.view(), diff.view()).ok_or(ClassifierError::SingularCovariance)?;
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(ClassifierError::SingularCovariance);
    }
    let n = y.len() as f64;
    let priors = [counts[0] as f64 / n, counts[1] as f64 / n];
    let mid = weights.dot(&((&mean0 + &mean1) * 0.5));
    let threshold = mid - (priors[1] / priors[0]).ln();
    Ok(LdaModel {
        mean0,
        mean1,
        covariance: cov,
        priors,
        weights,
        threshold,
    })
}

// ---------------------------------------------------------------------------
// Gaussian naive Bayes

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnbParams {
    pub var_floor: f64,
}

impl Default for GnbParams {
    fn default() -> Self {
        Self { var_floor: 1e-9 }
    }
}

/// `P(y | x) ∝ P(y) · Πⱼ N(xⱼ; μ_yj, σ²_yj)`, evaluated in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    pub priors: [f64; 2],
    /// `[2 × d]`
    pub means: Array2<f64>,
    /// `[2 × d]`
    pub variances: Array2<f64>,
}

impl GaussianNbModel {
    fn log_joint(&self, x: ArrayView1<'_, f64>) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            let mut s = self.priors[c].ln();
            for ((&xi, &mu), &var) in x.iter().zip(self.means.row(c)).zip(self.variances.row(c)) {
                let d = xi - mu;
                s += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var);
            }
            *o = s;
        }
        out
    }

    /// Class posteriors `[P(0|x), P(1|x)]`.
    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> [f64; 2] {
        let [l0, l1] = self.log_joint(x);
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        let z = e0 + e1;
        let p1 = e1 / z;
        [1.0 - p1, p1]
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> u8 {
        let [l0, l1] = self.log_joint(x);
        u8::from(l1 > l0)
    }
}

pub fn fit_gnb(x: ArrayView2<'_, f64>, y: &[u8], params: GnbParams) -> Result<GaussianNbModel> {
    let counts = check_xy(x, y)?;
    if counts[0] == 0 || counts[1] == 0 {
        return Err(ClassifierError::SingleClass);
    }
    if !(params.var_floor > 0.0) {
        return Err(ClassifierError::InvalidParameter(format!(
            "var_floor {}",
            params.var_floor
        )));
    }
    let d = x.ncols();
    let mut means = Array2::zeros((2, d));
    let mut variances = Array2::zeros((2, d));
    for c in 0..2u8 {
        let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        let xc = x.select(Axis(0), &rows);
        means
            .row_mut(c as usize)
            .assign(&xc.mean_axis(Axis(0)).expect("non-empty"));
        variances
            .row_mut(c as usize)
            .assign(&xc.var_axis(Axis(0), 0.0).mapv(|v| v.max(params.var_floor)));
    }
    let n = y.len() as f64;
    Ok(GaussianNbModel {
        priors: [counts[0] as f64 / n, counts[1] as f64 / n],
        means,
        variances,
    })
}

// ---------------------------------------------------------------------------
// k nearest neighbours

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
    pub k: usize,
}

impl KnnModel {
    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances resolve to the lower index.
    pub fn neighbors(&self, x: ArrayView1<'_, f64>) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().take(self.k).map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> u8 {
        let votes: Vec<u8> = self.neighbors(x).into_iter().map(|i| self.y[i]).collect();
        crate::stats::binary_mode(&votes)
    }
}

pub fn fit_knn(x: ArrayView2<'_, f64>, y: &[u8], params: KnnParams) -> Result<KnnModel> {
    check_xy(x, y)?;
    if params.k == 0 || params.k.is_multiple_of(2) || params.k > x.nrows() {
        return Err(ClassifierError::InvalidK {
            k: params.k,
            n: x.nrows(),
        });
    }
    Ok(KnnModel {
        x: x.to_owned(),
        y: y.to_vec(),
        k: params.k,
    })
}

// ---------------------------------------------------------------------------
// Linear SVM

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            epochs: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl LinearSvmModel {
    pub fn decision(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.weights.dot(&x) + self.bias
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> u8 {
        u8::from(self.decision(x) > 0.0)
    }

    /// `λ/2 ‖w‖² + mean(max(0, 1 − ŷ·(w·x + b)))` with `ŷ ∈ {−1, +1}`.
    pub fn objective(&self, x: ArrayView2<'_, f64>, y: &[u8]) -> f64 {
        let scores = x.dot(&self.weights) + self.bias;
        let hinge: f64 = scores
            .iter()
            .zip(y)
            .map(|(&s, &l)| (1.0 - if l == 1 { s } else { -s }).max(0.0))
            .sum();
        0.5 * self.lambda * self.weights.dot(&self.weights) + hinge / y.len() as f64
    }
}

/// Pegasos sub-gradient descent, step `1/(λt)`, one seeded pass over the
/// data per epoch. The bias is learned as the weight of a constant feature.
/// The iterate with the lowest objective (checked after every epoch, starting
/// from `w = 0`) is returned.
pub fn fit_svm(x: ArrayView2<'_, f64>, y: &[u8], params: SvmParams, seed: u64) -> Result<LinearSvmModel> {
    let counts = check_xy(x, y)?;
    if !(params.lambda > 0.0) {
        return Err(ClassifierError::InvalidParameter(format!("lambda {}", params.lambda)));
    }
    let d = x.ncols();
    if counts[0] == 0 || counts[1] == 0 {
        return Ok(LinearSvmModel {
            weights: Array1::zeros(d),
            bias: if counts[1] > 0 { 1.0 } else { -1.0 },
            lambda: params.lambda,
        });
    }
    let signs: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let mut best = LinearSvmModel {
        weights: Array1::zeros(d),
        bias: 0.0,
        lambda: params.lambda,
    };
    let mut best_obj = best.objective(x, y);
    let mut w = Array1::<f64>::zeros(d + 1);
    let radius = 1.0 / params.lambda.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut t = 0usize;
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (params.lambda * t as f64);
            let row = x.row(i);
            let margin = signs[i] * (w.slice(ndarray::s![..d]).dot(&row) + w[d]);
            w *= 1.0 - eta * params.lambda;
            if margin < 1.0 {
                w.slice_mut(ndarray::s![..d]).scaled_add(eta * signs[i], &row);
                w[d] += eta * signs[i];
            }
            let norm = w.dot(&w).sqrt();
            if norm > radius {
                w *= radius / norm;
            }
        }
        let cand = LinearSvmModel {
            weights: w.slice(ndarray::s![..d]).to_owned(),
            bias: w[d],
            lambda: params.lambda,
        };
        let obj = cand.objective(x, y);
        if !obj.is_finite() {
            return Err(ClassifierError::NonFiniteLoss { epoch });
        }
        if obj < best_obj {
            best_obj = obj;
            best = cand;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Majority-vote ensemble

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub knn: KnnModel,
    pub lda: LdaModel,
    pub svm: LinearSvmModel,
}

impl EnsembleModel {
    pub fn votes(&self, x: ArrayView1<'_, f64>) -> [u8; 3] {
        [self.knn.predict(x), self.lda.predict(x), self.svm.predict(x)]
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> u8 {
        majority3(self.votes(x))
    }
}

pub fn majority3(v: [u8; 3]) -> u8 {
    u8::from(v.iter().filter(|&&l| l == 1).count() >= 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    #[serde(default)]
    pub knn: KnnParams,
    #[serde(default)]
    pub lda: LdaParams,
    #[serde(default)]
    pub svm: SvmParams,
}

pub fn fit_ensemble(x: ArrayView2<'_, f64>, y: &[u8], params: EnsembleParams, seed: u64) -> Result<EnsembleModel> {
    Ok(EnsembleModel {
        knn: fit_knn(x, y, params.knn)?,
        lda: fit_lda(x, y, params.lda)?,
        svm: fit_svm(x, y, params.svm, seed)?,
    })
}

// ---------------------------------------------------------------------------
// Dispatch over kinds

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierConfig {
    Logreg {
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_lr_epochs")]
        epochs: usize,
        #[serde(default = "default_l2")]
        l2: f64,
    },
    Lda {
        #[serde(default)]
        ridge: Option<f64>,
    },
    Gnb {
        #[serde(default = "default_var_floor")]
        var_floor: f64,
    },
    Knn {
        #[serde(default = "default_k")]
        k: usize,
    },
    Svm {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_svm_epochs")]
        epochs: usize,
    },
    Ensemble {
        #[serde(default = "default_k")]
        knn_k: usize,
        #[serde(default)]
        lda_ridge: Option<f64>,
        #[serde(default = "default_lambda")]
        svm_lambda: f64,
        #[serde(default = "default_svm_epochs")]
        svm_epochs: usize,
    },
}

fn default_lr() -> f64 {
    LogRegParams::default().lr
}
fn default_lr_epochs() -> usize {
    LogRegParams::default().epochs
}
fn default_l2() -> f64 {
    LogRegParams::default().l2
}
fn default_var_floor() -> f64 {
    GnbParams::default().var_floor
}
fn default_k() -> usize {
    KnnParams::default().k
}
fn default_lambda() -> f64 {
    SvmParams::default().lambda
}
fn default_svm_epochs() -> usize {
    SvmParams::default().epochs
}

impl ClassifierConfig {
    pub fn logreg() -> Self {
        Self::Logreg {
            lr: default_lr(),
            epochs: default_lr_epochs(),
            l2: default_l2(),
        }
    }
    pub fn lda() -> Self {
        Self::Lda { ridge: None }
    }
    pub fn gnb() -> Self {
        Self::Gnb {
            var_floor: default_var_floor(),
        }
    }
    pub fn knn() -> Self {
        Self::Knn { k: default_k() }
    }
    pub fn svm() -> Self {
        Self::Svm {
            lambda: default_lambda(),
            epochs: default_svm_epochs(),
        }
    }
    pub fn ensemble() -> Self {
        Self::Ensemble {
            knn_k: default_k(),
            lda_ridge: None,
            svm_lambda: default_lambda(),
            svm_epochs: default_svm_epochs(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Logreg { .. } => "logreg",
            Self::Lda { .. } => "lda",
            Self::Gnb { .. } => "gnb",
            Self::Knn { .. } => "knn",
            Self::Svm { .. } => "svm",
            Self::Ensemble { .. } => "ensemble",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierModel {
    Logreg(LogisticRegressionModel),
    Lda(LdaModel),
    Gnb(GaussianNbModel),
    Knn(KnnModel),
    Svm(LinearSvmModel),
    Ensemble(EnsembleModel),
}

impl ClassifierModel {
    pub fn n_features(&self) -> usize {
        match self {
            Self::Logreg(m) => m.theta.len(),
            Self::Lda(m) => m.weights.len(),
            Self::Gnb(m) => m.means.ncols(),
            Self::Knn(m) => m.x.ncols(),
            Self::Svm(m) => m.weights.len(),
            Self::Ensemble(m) => m.lda.weights.len(),
        }
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<u8> {
        check_dim(self.n_features(), x)?;
        Ok(match self {
            Self::Logreg(m) => m.predict(x),
            Self::Lda(m) => m.predict(x),
            Self::Gnb(m) => m.predict(x),
            Self::Knn(m) => m.predict(x),
            Self::Svm(m) => m.predict(x),
            Self::Ensemble(m) => m.predict(x),
        })
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<u8>> {
        x.rows().into_iter().map(|r| self.predict(r)).collect()
    }
}

pub fn fit_classifier(cfg: &ClassifierConfig, x: ArrayView2<'_, f64>, y: &[u8], seed: u64) -> Result<ClassifierModel> {
    Ok(match *cfg {
        ClassifierConfig::Logreg { lr, epochs, l2 } => {
            ClassifierModel::Logreg(fit_logreg(x, y, LogRegParams { lr, epochs, l2 })?)
        }
        ClassifierConfig::Lda { ridge } => ClassifierModel::Lda(fit_lda(x, y, LdaParams { ridge })?),
        ClassifierConfig::Gnb { var_floor } => ClassifierModel::Gnb(fit_gnb(x, y, GnbParams { var_floor })?),
        ClassifierConfig::Knn { k } => ClassifierModel::Knn(fit_knn(x, y, KnnParams { k })?),
        ClassifierConfig::Svm { lambda, epochs } => {
            ClassifierModel::Svm(fit_svm(x, y, SvmParams { lambda, epochs }, seed)?)
        }
        ClassifierConfig::Ensemble {
            knn_k,
            lda_ridge,
            svm_lambda,
            svm_epochs,
        } => ClassifierModel::Ensemble(fit_ensemble(
            x,
            y,
            EnsembleParams {
                knn: KnnParams { k: knn_k },
                lda: LdaParams { ridge: lda_ridge },
                svm: SvmParams {
                    lambda: svm_lambda,
                    epochs: svm_epochs,
                },
            },
            seed,
        )?),
    })
}

/// On-disk form of a model: the parameters plus the feature names they were
/// fitted against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub feature_names: Vec<String>,
    pub model: ClassifierModel,
}

impl SavedModel {
    pub fn check_features(&self, given: &[String]) -> Result<()> {
        if self.feature_names == given {
            Ok(())
        } else {
            Err(ClassifierError::FeatureNameMismatch {
                trained: self.feature_names.clone(),
                given: given.to_vec(),
            })
        }
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &ClassifierModel, feature_names: &[String]) -> Result<()> {
    let doc = SavedModel {
        feature_names: feature_names.to_vec(),
        model: model.clone(),
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| ClassifierError::Io(e.to_string()))?;
    fs::write(path, json).map_err(|e| ClassifierError::Io(e.to_string()))
}

/// Loads a model and refuses it unless it was trained on `feature_names`.
pub fn load_model(path: impl AsRef<Path>, feature_names: &[String]) -> Result<ClassifierModel> {
    let text = fs::read_to_string(path).map_err(|e| ClassifierError::Io(e.to_string()))?;
    let doc: SavedModel = serde_json::from_str(&text).map_err(|e| ClassifierError::Io(e.to_string()))?;
    doc.check_features(feature_names)?;
    Ok(doc.model)
}

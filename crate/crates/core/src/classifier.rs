//! Per-sample test-time training of a soft-margin linear SVM.
//!
//! A fresh classifier is fitted on the pseudo-labeled pixels of one sample
//! and then evaluated on every pixel of the same sample's dense feature map.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::maps::{check_same_size, FeatureMap, MaskImage, ScoreMap, ShapeError};
use crate::pseudolabel::{build_pseudolabels, Label, PseudoLabelConfig, PseudoLabelError, PseudoLabelSet};

const INITIAL_STEP: f64 = 0.1;
const STEP_DECAY: f64 = 100.0;
const STALL_WINDOW: usize = 50;
const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("training set needs both labels (anomalous {anomalous}, nominal {nominal})")]
    SingleClass { anomalous: usize, nominal: usize },
    #[error("pseudo-label ({row}, {col}) outside {height}x{width}")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("non-finite feature in training row {0}")]
    NonFiniteFeature(usize),
    #[error("objective became non-finite at iteration {0}")]
    NonFiniteObjective(usize),
    #[error("model has {model} weights but the feature map has {features} channels")]
    Dimension { model: usize, features: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    PseudoLabel(#[from] PseudoLabelError),
}

/// How the hinge terms enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    /// `||w||^2 + C * mean(hinge)`.
    Mean,
    /// `0.5 * ||w||^2 + C * sum(hinge)`.
    #[default]
    Sum,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Mean => "mean",
            LossMode::Sum => "sum",
        })
    }
}

impl FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(LossMode::Mean),
            "sum" => Ok(LossMode::Sum),
            other => Err(format!("unknown loss mode {other:?}, expected sum or mean")),
        }
    }
}

/// Rows of pixel features with their pseudo-labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    coords: Vec<(usize, usize)>,
}

impl TrainingSet {
    /// Builds a set from row-major `features` (`labels.len() x dim`) and
    /// `±1` labels.
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self, ClassifierError> {
        assert_eq!(features.len(), labels.len() * dim, "feature matrix shape");
        let coords = (0..labels.len()).map(|i| (i, 0)).collect();
        Self::checked(dim, features, labels, coords)
    }

    fn checked(
        dim: usize,
        features: Vec<f64>,
        labels: Vec<f64>,
        coords: Vec<(usize, usize)>,
    ) -> Result<Self, ClassifierError> {
        let anomalous = labels.iter().filter(|&&y| y > 0.0).count();
        let nominal = labels.len() - anomalous;
        if anomalous == 0 || nominal == 0 {
            return Err(ClassifierError::SingleClass { anomalous, nominal });
        }
        if let Some(row) = (0..labels.len())
            .find(|&i| features[i * dim..(i + 1) * dim].iter().any(|v| !v.is_finite()))
        {
            return Err(ClassifierError::NonFiniteFeature(row));
        }
        Ok(Self {
            dim,
            features,
            labels,
            coords,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    fn standardized(&self) -> (TrainingSet, Vec<f64>, Vec<f64>) {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (m, v) in mean.iter_mut().zip(self.row(i)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; self.dim];
        for i in 0..self.len() {
            for ((s, v), m) in var.iter_mut().zip(self.row(i)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale: Vec<f64> = var.iter().map(|v| v.max(VARIANCE_FLOOR).sqrt()).collect();
        let mut features = self.features.clone();
        for row in features.chunks_exact_mut(self.dim) {
            for ((v, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
                *v = (*v - m) / s;
            }
        }
        let set = TrainingSet {
            dim: self.dim,
            features,
            labels: self.labels.clone(),
            coords: self.coords.clone(),
        };
        (set, mean, scale)
    }
}

/// Collects the feature vector under each pseudo-label, in label order.
pub fn gather_training_set(
    f: &FeatureMap,
    labels: &PseudoLabelSet,
) -> Result<TrainingSet, ClassifierError> {
    let dim = f.channels();
    let mut features = Vec::with_capacity(labels.points.len() * dim);
    let mut ys = Vec::with_capacity(labels.points.len());
    let mut coords = Vec::with_capacity(labels.points.len());
    for p in &labels.points {
        if p.row >= f.height() || p.col >= f.width() {
            return Err(ClassifierError::OutOfBounds {
                row: p.row,
                col: p.col,
                height: f.height(),
                width: f.width(),
            });
        }
        features.extend(f.pixel(p.row, p.col).iter().map(|&v| v as f64));
        ys.push(p.label.sign());
        coords.push((p.row, p.col));
    }
    TrainingSet::checked(dim, features, ys, coords)
}

/// Optimizer behind [`train_svm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvmSolver {
    /// SMO on the dual with a second-order working set, then an exact
    /// line search on the bias.
    #[default]
    Dual,
    /// Full-batch subgradient descent on the primal.
    Subgradient,
}

impl fmt::Display for SvmSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SvmSolver::Dual => "dual",
            SvmSolver::Subgradient => "subgradient",
        })
    }
}

impl FromStr for SvmSolver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dual" => Ok(SvmSolver::Dual),
            "subgradient" => Ok(SvmSolver::Subgradient),
            other => Err(format!("unknown solver {other:?}, expected dual or subgradient")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub loss: LossMode,
    pub solver: SvmSolver,
    /// Iteration cap: descent steps for the subgradient solver, sweeps of
    /// `n` pair updates for the dual solver.
    pub max_iters: usize,
    /// Relative objective stall tolerance (subgradient) or maximal KKT
    /// violation (dual).
    pub tol: f64,
    /// Recorded with the model; the solver itself is deterministic.
    pub seed: u64,
    /// Standardize each feature with training-set statistics.
    pub standardize: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 0.001,
            loss: LossMode::Sum,
            solver: SvmSolver::Dual,
            max_iters: 2000,
            tol: 1e-6,
            seed: 0,
            standardize: false,
        }
    }
}

/// Linear decision function `w . f - b`; positive means anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub loss: LossMode,
    /// Objective of the returned iterate (in standardized units when
    /// standardization was on).
    pub objective: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LinearSvm {
    #[inline]
    pub fn decision(&self, f: &[f32]) -> f64 {
        self.weights
            .iter()
            .zip(f)
            .map(|(w, &x)| w * x as f64)
            .sum::<f64>()
            - self.bias
    }
}

/// Objective value of `(w, b)` on `ts`.
pub fn svm_objective(ts: &TrainingSet, weights: &[f64], bias: f64, c: f64, loss: LossMode) -> f64 {
    let hinge: f64 = (0..ts.len())
        .map(|i| {
            let m = ts.labels[i] * (dot(weights, ts.row(i)) - bias);
            (1.0 - m).max(0.0)
        })
        .sum();
    let norm2 = dot(weights, weights);
    match loss {
        LossMode::Sum => 0.5 * norm2 + c * hinge,
        LossMode::Mean => norm2 + c * hinge / ts.len() as f64,
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits `(w, b)` minimizing the configured objective; the bias is never
/// regularized. Deterministic for a given training set and config.
pub fn train_svm(ts: &TrainingSet, config: &SvmConfig) -> Result<LinearSvm, ClassifierError> {
    if config.standardize {
        let (scaled, mean, scale) = ts.standardized();
        let mut model = train_svm(
            &scaled,
            &SvmConfig {
                standardize: false,
                ..*config
            },
        )?;
        // fold (f - mean) / scale into the weights and bias
        for (w, s) in model.weights.iter_mut().zip(&scale) {
            *w /= s;
        }
        model.bias += dot(&model.weights, &mean);
        return Ok(model);
    }
    match config.solver {
        SvmSolver::Dual => train_dual(ts, config),
        SvmSolver::Subgradient => train_subgradient(ts, config),
    }
}

/// Full-batch subgradient descent from `w = 0, b = 0` with step
/// `0.1 / (1 + t / 100)`. Stops after `max_iters` or once the best objective
/// improves by less than `tol` (relative) over 50 iterations, and returns the
/// best iterate seen.
fn train_subgradient(ts: &TrainingSet, config: &SvmConfig) -> Result<LinearSvm, ClassifierError> {
    let n = ts.len();
    let dim = ts.dim();
    let (reg, hinge_scale) = match config.loss {
        LossMode::Sum => (1.0, config.c),
        LossMode::Mean => (2.0, config.c / n as f64),
    };
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut grad_w = vec![0.0; dim];
    let mut best_w = w.clone();
    let mut best_b = b;
    let mut best = svm_objective(ts, &w, b, config.c, config.loss);
    let mut history = Vec::with_capacity(config.max_iters.min(1 << 16) + 1);
    history.push(best);
    let mut iterations = 0;

    for t in 0..config.max_iters {
        // subgradient at the current iterate
        for (g, wi) in grad_w.iter_mut().zip(&w) {
            *g = reg * wi;
        }
        let mut grad_b = 0.0;
        for i in 0..n {
            let y = ts.labels[i];
            let x = ts.row(i);
            if y * (dot(&w, x) - b) < 1.0 {
                for (g, xi) in grad_w.iter_mut().zip(x) {
                    *g -= hinge_scale * y * xi;
                }
                grad_b += hinge_scale * y;
            }
        }
        let step = INITIAL_STEP / (1.0 + t as f64 / STEP_DECAY);
        for (wi, g) in w.iter_mut().zip(&grad_w) {
            *wi -= step * g;
        }
        b -= step * grad_b;
        iterations = t + 1;

        let obj = svm_objective(ts, &w, b, config.c, config.loss);
        if !obj.is_finite() {
            return Err(ClassifierError::NonFiniteObjective(iterations));
        }
        if obj < best {
            best = obj;
            best_w.copy_from_slice(&w);
            best_b = b;
        }
        history.push(best);
        if history.len() > STALL_WINDOW {
            let before = history[history.len() - 1 - STALL_WINDOW];
            if (before - best) <= config.tol * before.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }

    Ok(LinearSvm {
        weights: best_w,
        bias: best_b,
        c: config.c,
        loss: config.loss,
        objective: best,
        iterations,
        seed: config.seed,
    })
}

const TAU: f64 = 1e-12;

/// SMO on `max 1'a - 0.5 a'Qa` s.t. `0 <= a <= C'`, `y'a = 0`, with
/// `Q_ij = y_i y_j x_i . x_j`. Mean mode is the same problem with
/// `C' = C / (2n)` and the objective doubled. `w = sum a_i y_i x_i` is kept
/// explicitly, so the gradient update after each pair costs `O(n d)`.
fn train_dual(ts: &TrainingSet, config: &SvmConfig) -> Result<LinearSvm, ClassifierError> {
    let n = ts.len();
    let dim = ts.dim();
    let y = &ts.labels;
    let upper = match config.loss {
        LossMode::Sum => config.c,
        LossMode::Mean => config.c / (2.0 * n as f64),
    };
    let sq_norm: Vec<f64> = (0..n).map(|i| dot(ts.row(i), ts.row(i))).collect();
    let mut alpha = vec![0.0f64; n];
    // gradient of the dual (as a minimization): G_i = y_i w.x_i - 1
    let mut grad = vec![-1.0f64; n];
    let mut w = vec![0.0f64; dim];
    let eps = config.tol.max(1e-12);
    let mut iterations = 0;

    let is_upper = |a: f64| a >= upper;
    let is_lower = |a: f64| a <= 0.0;

    let budget = config.max_iters.saturating_mul(n);
    while iterations < budget {
        // first index: maximal violation among I_up
        let mut g_max = f64::NEG_INFINITY;
        let mut first = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !is_upper(alpha[t]) } else { !is_lower(alpha[t]) };
            if in_up && -y[t] * grad[t] >= g_max {
                g_max = -y[t] * grad[t];
                first = t;
            }
        }
        // second index: largest second-order decrease among I_low
        let mut g_max2 = f64::NEG_INFINITY;
        let mut second = usize::MAX;
        let mut best_decrease = f64::INFINITY;
        if first != usize::MAX {
            let xi = ts.row(first);
            for j in 0..n {
                let in_low = if y[j] > 0.0 { !is_lower(alpha[j]) } else { !is_upper(alpha[j]) };
                if !in_low {
                    continue;
                }
                let v = y[j] * grad[j];
                g_max2 = g_max2.max(v);
                let diff = g_max + v;
                if diff > 0.0 {
                    let quad = sq_norm[first] + sq_norm[j] - 2.0 * dot(xi, ts.row(j));
                    let decrease = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if decrease <= best_decrease {
                        best_decrease = decrease;
                        second = j;
                    }
                }
            }
        }
        if first == usize::MAX || second == usize::MAX || g_max + g_max2 < eps {
            break;
        }
        let (i, j) = (first, second);
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (sq_norm[i] + sq_norm[j] - 2.0 * dot(ts.row(i), ts.row(j))).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > upper {
                    alpha[i] = upper;
                    alpha[j] = upper - diff;
                }
            } else if alpha[j] > upper {
                alpha[j] = upper;
                alpha[i] = upper + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > upper {
                if alpha[i] > upper {
                    alpha[i] = upper;
                    alpha[j] = sum - upper;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > upper {
                if alpha[j] > upper {
                    alpha[j] = upper;
                    alpha[i] = sum - upper;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let step_i = (alpha[i] - old_i) * y[i];
        let step_j = (alpha[j] - old_j) * y[j];
        let (xi, xj) = (ts.row(i), ts.row(j));
        let mut dw = vec![0.0; dim];
        for k in 0..dim {
            dw[k] = step_i * xi[k] + step_j * xj[k];
            w[k] += dw[k];
        }
        for t in 0..n {
            grad[t] += y[t] * dot(&dw, ts.row(t));
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(ClassifierError::NonFiniteObjective(iterations));
        }
    }

    if iterations == budget {
        log::debug!("dual solver stopped at the {budget} update cap on {n} points");
    }

    // bias from the free multipliers, else the midpoint of the feasible range
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..n {
        let v = y[t] * grad[t];
        if is_upper(alpha[t]) {
            if y[t] < 0.0 {
                hi = hi.min(v);
            } else {
                lo = lo.max(v);
            }
        } else if is_lower(alpha[t]) {
            if y[t] > 0.0 {
                hi = hi.min(v);
            } else {
                lo = lo.max(v);
            }
        } else {
            free_sum += v;
            free_count += 1;
        }
    }
    let mut bias = if free_count > 0 {
        free_sum / free_count as f64
    } else if lo.is_finite() && hi.is_finite() {
        (lo + hi) / 2.0
    } else if lo.is_finite() {
        lo
    } else {
        hi
    };
    if !bias.is_finite() {
        bias = 0.0;
    }
    let mut objective = svm_objective(ts, &w, bias, config.c, config.loss);
    if let Some((b, obj)) = best_bias(ts, &w, config) {
        if obj < objective {
            bias = b;
            objective = obj;
        }
    }
    if !objective.is_finite() {
        return Err(ClassifierError::NonFiniteObjective(iterations));
    }
    Ok(LinearSvm {
        weights: w,
        bias,
        c: config.c,
        loss: config.loss,
        objective,
        iterations,
        seed: config.seed,
    })
}

/// Exact minimizer of the objective over `b` for fixed `w`. The hinge sum is
/// convex and piecewise linear in `b` with kinks at `w.x_i - y_i`, so the
/// minimum sits on a kink.
fn best_bias(ts: &TrainingSet, w: &[f64], config: &SvmConfig) -> Option<(f64, f64)> {
    let n = ts.len();
    let z: Vec<f64> = (0..n).map(|i| dot(w, ts.row(i))).collect();
    let mut kinks: Vec<f64> = (0..n).map(|i| z[i] - ts.labels[i]).collect();
    kinks.sort_by(|a, b| a.total_cmp(b));
    // slope of the hinge sum just left of the first kink: every negative
    // example is active with slope -1, positives inactive
    let mut slope = -(ts.labels.iter().filter(|&&y| y < 0.0).count() as f64);
    let mut best = None;
    for b in kinks {
        // crossing a kink: positive examples switch on, negatives off
        slope += 1.0;
        if slope >= 0.0 {
            best = Some(b);
            break;
        }
    }
    let b = best?;
    Some((b, svm_objective(ts, w, b, config.c, config.loss)))
}

/// Marks pixels with `w . f - b > 0`; excluded pixels stay nominal.
pub fn predict_dense(
    model: &LinearSvm,
    f: &FeatureMap,
    exclude: Option<&MaskImage>,
) -> Result<MaskImage, ClassifierError> {
    if model.weights.len() != f.channels() {
        return Err(ClassifierError::Dimension {
            model: model.weights.len(),
            features: f.channels(),
        });
    }
    if let Some(ex) = exclude {
        check_same_size(ex.size(), f.size())?;
    }
    let bits: Vec<bool> = (0..f.pixel_count())
        .map(|i| !exclude.is_some_and(|m| m.is_on_flat(i)) && model.decision(f.pixel_flat(i)) > 0.0)
        .collect();
    Ok(MaskImage::from_bools(f.height(), f.width(), &bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentConfig {
    pub labels: PseudoLabelConfig,
    pub svm: SvmConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// No peak survived suppression: the mask is all nominal.
    EmptyAnomalous,
    /// The guard band covered the nominal grid: the mask is `score > t`.
    EmptyNominal,
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fallback::EmptyAnomalous => "empty_anomalous",
            Fallback::EmptyNominal => "empty_nominal",
        })
    }
}

/// What happened while segmenting one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub anomalous_labels: usize,
    pub nominal_labels: usize,
    pub threshold: f32,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub predicted_anomalous: usize,
    pub fallback: Option<Fallback>,
    pub loss: LossMode,
    pub c: f64,
}

/// Pseudo-labels `scores`, trains a classifier on `features` and predicts a
/// dense mask. Label mining failures fall back instead of erroring, so every
/// aligned input yields a mask.
pub fn run_ttt4as(
    scores: &ScoreMap,
    features: &FeatureMap,
    exclude: Option<&MaskImage>,
    config: &SegmentConfig,
) -> Result<(MaskImage, Diagnostics), ClassifierError> {
    check_same_size(scores.size(), features.size())?;
    if let Some(ex) = exclude {
        check_same_size(ex.size(), scores.size())?;
    }
    let mut diag = Diagnostics {
        anomalous_labels: 0,
        nominal_labels: 0,
        threshold: f32::NAN,
        objective: None,
        iterations: 0,
        predicted_anomalous: 0,
        fallback: None,
        loss: config.svm.loss,
        c: config.svm.c,
    };
    let (h, w) = scores.size();
    let labels = match build_pseudolabels(scores, exclude, &config.labels) {
        Ok(labels) => labels,
        Err(PseudoLabelError::EmptyAnomalous { threshold }) => {
            diag.threshold = threshold;
            diag.fallback = Some(Fallback::EmptyAnomalous);
            log::debug!("no peak above {threshold}; empty mask");
            return Ok((MaskImage::empty(h, w), diag));
        }
        Err(PseudoLabelError::EmptyNominal {
            threshold,
            anomalous,
        }) => {
            diag.threshold = threshold;
            diag.anomalous_labels = anomalous;
            diag.fallback = Some(Fallback::EmptyNominal);
            log::debug!("no nominal grid point left; thresholding at {threshold}");
            let mask = MaskImage::from_fn(h, w, |r, c| {
                !exclude.is_some_and(|m| m.is_on(r, c)) && scores.get(r, c) > threshold
            });
            diag.predicted_anomalous = mask.count_on();
            return Ok((mask, diag));
        }
        Err(e) => return Err(e.into()),
    };
    diag.threshold = labels.threshold;
    diag.anomalous_labels = labels.count(Label::Anomalous);
    diag.nominal_labels = labels.count(Label::Nominal);
    let ts = gather_training_set(features, &labels)?;
    let model = train_svm(&ts, &config.svm)?;
    diag.objective = Some(model.objective);
    diag.iterations = model.iterations;
    let mask = predict_dense(&model, features, exclude)?;
    diag.predicted_anomalous = mask.count_on();
    Ok((mask, diag))
}

/// Same pipeline with the raw score as the only per-pixel feature.
pub fn run_score_feature_ablation(
    scores: &ScoreMap,
    exclude: Option<&MaskImage>,
    config: &SegmentConfig,
) -> Result<(MaskImage, Diagnostics), ClassifierError> {
    run_ttt4as(scores, &scores.to_feature_map(), exclude, config)
}

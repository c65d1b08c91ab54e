//! Per-video affine calibration of raw predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{SPO2_CEIL, SPO2_FLOOR};
use crate::series::mean;

/// Window sizes used by the frame-selection ablation.
pub const WINDOW_SIZES: [usize; 5] = [270, 135, 27, 5, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    FirstN,
    IntelligentK,
}

impl std::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_n" => Ok(Self::FirstN),
            "intelligent_k" => Ok(Self::IntelligentK),
            _ => Err(Error::Invalid(format!("unknown calibration mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationWindow {
    /// Positions within the per-video series.
    pub indices: Vec<usize>,
    pub mode: WindowMode,
    pub n_or_k: usize,
    /// Intelligent sampling had too little label variation and used the
    /// first k samples instead.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fell_back: bool,
}

impl CalibrationWindow {
    pub fn first_n(n: usize, len: usize) -> Self {
        Self { indices: (0..n.min(len)).collect(), mode: WindowMode::FirstN, n_or_k: n, fell_back: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub alpha: f64,
    pub beta: f64,
    pub fallback_mean: f64,
    pub window: CalibrationWindow,
    /// The window predictions were constant so no slope could be fitted.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum AlphaMode {
    Auto,
    Fixed(f64),
}

/// How each test video is calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub mode: WindowMode,
    /// Window size; 0 disables per-video calibration.
    pub count: usize,
    pub alpha: AlphaMode,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { mode: WindowMode::FirstN, count: 270, alpha: AlphaMode::Auto }
    }
}

impl CalibrationConfig {
    pub fn window(&self, truth: &[f64]) -> CalibrationWindow {
        match self.mode {
            WindowMode::FirstN => CalibrationWindow::first_n(self.count, truth.len()),
            WindowMode::IntelligentK => intelligent_sample(truth, self.count),
        }
    }

    /// Fits and applies calibration for one video. `population_offset` is
    /// used when `count == 0`.
    pub fn calibrate(&self, pred: &[f64], truth: &[f64], population_offset: f64) -> (Vec<f64>, Option<CalibrationParams>) {
        if self.count == 0 {
            return (no_calibration(pred, population_offset), None);
        }
        let window = self.window(truth);
        let params = match self.alpha {
            AlphaMode::Auto => fit_affine(pred, truth, window),
            AlphaMode::Fixed(a) => fit_beta_fixed_alpha(pred, truth, window, a),
        };
        (apply_calibration(pred, &params), Some(params))
    }
}

fn window_values(xs: &[f64], window: &CalibrationWindow) -> Vec<f64> {
    window.indices.iter().map(|&i| xs[i]).collect()
}

fn window_mean(truth: &[f64], window: &CalibrationWindow) -> f64 {
    mean(&window_values(truth, window)).clamp(SPO2_FLOOR, SPO2_CEIL)
}

/// Least-squares `truth ≈ alpha · pred + beta` over the window.
pub fn fit_affine(pred: &[f64], truth: &[f64], window: CalibrationWindow) -> CalibrationParams {
    let y = window_values(pred, &window);
    let s = window_values(truth, &window);
    let fallback_mean = window_mean(truth, &window);
    let (my, ms) = (mean(&y), mean(&s));
    let var: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let cov: f64 = y.iter().zip(&s).map(|(a, b)| (a - my) * (b - ms)).sum();
    let spread = y.iter().map(|v| (v - my).abs()).fold(0.0, f64::max);
    if y.len() < 2 || spread <= 1e-12 * my.abs().max(1.0) {
        return CalibrationParams { alpha: 0.0, beta: 0.0, fallback_mean, window, degenerate: true };
    }
    let alpha = cov / var;
    CalibrationParams { alpha, beta: ms - alpha * my, fallback_mean, window, degenerate: false }
}

pub fn fit_beta_fixed_alpha(pred: &[f64], truth: &[f64], window: CalibrationWindow, alpha: f64) -> CalibrationParams {
    let residual: Vec<f64> = window.indices.iter().map(|&i| truth[i] - alpha * pred[i]).collect();
    let fallback_mean = window_mean(truth, &window);
    CalibrationParams { alpha, beta: mean(&residual), fallback_mean, window, degenerate: false }
}

/// `beta + alpha · pred` clamped to [80, 100]; the window mean when
/// `alpha <= 0`.
pub fn apply_calibration(pred: &[f64], p: &CalibrationParams) -> Vec<f64> {
    if p.alpha > 0.0 {
        pred.iter().map(|v| (p.beta + p.alpha * v).clamp(SPO2_FLOOR, SPO2_CEIL)).collect()
    } else {
        vec![p.fallback_mean; pred.len()]
    }
}

/// Population offset used in place of per-video calibration.
pub fn population_offset(train_truth: &[f64], train_pred: &[f64]) -> f64 {
    mean(train_truth) - mean(train_pred)
}

pub fn no_calibration(pred: &[f64], offset: f64) -> Vec<f64> {
    pred.iter().map(|v| (v + offset).clamp(SPO2_FLOOR, SPO2_CEIL)).collect()
}

/// Picks `k` samples whose labels are nearest the evenly spaced quantiles
/// of the label distribution (min to max; the median for k = 1). Ties go
/// to the earliest index and each sample is used at most once.
pub fn intelligent_sample(truth: &[f64], k: usize) -> CalibrationWindow {
    let mut distinct: Vec<f64> = truth.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if k > distinct.len() || (k > 1 && distinct.len() < 2) {
        let mut w = CalibrationWindow::first_n(k, truth.len());
        w.mode = WindowMode::IntelligentK;
        w.fell_back = true;
        return w;
    }
    let mut sorted = truth.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut used = vec![false; truth.len()];
    let mut indices = Vec::with_capacity(k);
    for j in 0..k {
        let q = if k == 1 { 0.5 } else { j as f64 / (k - 1) as f64 };
        let target = quantile(&sorted, q);
        let best = (0..truth.len())
            .filter(|&i| !used[i])
            .min_by(|&a, &b| (truth[a] - target).abs().total_cmp(&(truth[b] - target).abs()).then(a.cmp(&b)))
            .expect("k <= len");
        used[best] = true;
        indices.push(best);
    }
    CalibrationWindow { indices, mode: WindowMode::IntelligentK, n_or_k: k, fell_back: false }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

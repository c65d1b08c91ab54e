use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::pearson;

/// Lag window for the delay-aligned correlation.
pub const MAX_LAG_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointErrors {
    pub mae: f64,
    pub rmse: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
    pub mape: f64,
    /// `None` when either series is constant over every lag.
    pub pearson: Option<f64>,
    pub lag_s: Option<f64>,
    pub n: usize,
}

/// MAE, RMSE and MAPE (percent, truth in the denominator).
pub fn compute_errors(pred: &[f64], truth: &[f64]) -> Result<PointErrors> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some(i) = truth.iter().position(|&t| t == 0.0) {
        return Err(Error::ZeroTruth(i));
    }
    let n = pred.len() as f64;
    let (mut abs, mut sq, mut pct) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let e = t - p;
        abs += e.abs();
        sq += e * e;
        pct += (e / t).abs();
    }
    Ok(PointErrors { mae: abs / n, rmse: (sq / n).sqrt(), mape: 100.0 * pct / n })
}

/// Highest Pearson r over integer lags in `[-L, L]`, `L = round(max_lag_s *
/// rate_hz)`. At lag `l`, `pred[i]` is paired with `truth[i + l]`, so a
/// positive lag means the truth trails the prediction. Lags are visited in
/// order of increasing magnitude (negative first) so ties keep the smaller
/// |lag|.
pub fn aligned_pcc(pred: &[f64], truth: &[f64], max_lag_s: f64, rate_hz: f64) -> Result<Option<(f64, f64)>> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let max_lag = (max_lag_s * rate_hz).round() as usize;
    let n = pred.len();
    if n <= max_lag + 1 {
        return Err(Error::TooFewSamples { needed: max_lag + 2, got: n });
    }
    let mut best: Option<(f64, i64)> = None;
    let lags = std::iter::once(0i64).chain((1..=max_lag as i64).flat_map(|l| [-l, l]));
    for lag in lags {
        let r = if lag >= 0 {
            let l = lag as usize;
            pearson(&pred[..n - l], &truth[l..])
        } else {
            let l = (-lag) as usize;
            pearson(&pred[l..], &truth[..n - l])
        };
        if let Some(r) = r {
            if best.is_none_or(|(b, _)| r > b + 1e-12) {
                best = Some((r, lag));
            }
        }
    }
    Ok(best.map(|(r, lag)| (r, lag as f64 / rate_hz)))
}

pub fn error_stats(pred: &[f64], truth: &[f64], rate_hz: f64, max_lag_s: f64) -> Result<ErrorStats> {
    let e = compute_errors(pred, truth)?;
    let lag_s = max_lag_s.min(((pred.len().saturating_sub(2)) as f64 / rate_hz).floor().max(0.0));
    let pcc = aligned_pcc(pred, truth, lag_s, rate_hz)?;
    Ok(ErrorStats {
        mae: e.mae,
        rmse: e.rmse,
        mape: e.mape,
        pearson: pcc.map(|p| p.0),
        lag_s: pcc.map(|p| p.1),
        n: pred.len(),
    })
}

/// Percent change `100 (ours - baseline) / baseline`; negative is better
/// for error metrics.
pub fn percent_change(ours: f64, baseline: f64) -> f64 {
    100.0 * (ours - baseline) / baseline
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frames kept per video.
pub const SELECTED_FRAMES: usize = 540;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FramePolicy {
    /// One frame per second from the start.
    Uniform1Hz,
    /// Evenly over the window between the SpO2 maxima nearest the global
    /// minimum on either side.
    SpanMinmax,
}

impl std::str::FromStr for FramePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_1hz" => Ok(Self::Uniform1Hz),
            "span_minmax" => Ok(Self::SpanMinmax),
            _ => Err(Error::Invalid(format!("unknown frame policy `{s}`"))),
        }
    }
}

/// Selects [`SELECTED_FRAMES`] frame indices. `frame_labels` holds one SpO2
/// value per video frame.
pub fn select_frames(frame_labels: &[f64], frame_rate_hz: f64, policy: FramePolicy) -> Result<Vec<usize>> {
    select_frames_n(frame_labels, frame_rate_hz, policy, SELECTED_FRAMES)
}

pub fn select_frames_n(
    frame_labels: &[f64],
    frame_rate_hz: f64,
    policy: FramePolicy,
    count: usize,
) -> Result<Vec<usize>> {
    let total = frame_labels.len();
    let insufficient = || Error::InsufficientFrames { needed: count, available: total };
    if count == 0 {
        return Ok(Vec::new());
    }
    match policy {
        FramePolicy::Uniform1Hz => {
            let idx: Vec<usize> = (0..count).map(|k| (k as f64 * frame_rate_hz).round() as usize).collect();
            if idx[count - 1] >= total || idx.windows(2).any(|w| w[1] <= w[0]) {
                return Err(insufficient());
            }
            Ok(idx)
        }
        FramePolicy::SpanMinmax => {
            if total < count {
                return Err(insufficient());
            }
            let (lo, hi) = minmax_span(frame_labels);
            if hi - lo + 1 < count {
                return Err(insufficient());
            }
            Ok(even_indices(lo, hi, count))
        }
    }
}

/// (index of nearest maximum before the global minimum, index of nearest
/// maximum after it).
fn minmax_span(v: &[f64]) -> (usize, usize) {
    let min_i = (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    let before_max = v[..=min_i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = (0..=min_i).rev().find(|&i| v[i] == before_max).unwrap();
    let after_max = v[min_i..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = (min_i..v.len()).find(|&i| v[i] == after_max).unwrap();
    (lo, hi)
}

/// Rounds evenly spaced positions over [lo, hi]; collisions are pushed up.
fn even_indices(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count == 1 {
        return vec![lo];
    }
    let step = (hi - lo) as f64 / (count - 1) as f64;
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for j in 0..count {
        let mut i = (lo as f64 + j as f64 * step).round() as usize;
        if let Some(&prev) = out.last() {
            if i <= prev {
                i = prev + 1;
            }
        }
        out.push(i);
    }
    out
}

//! Frame selection, ROI tracking/extraction, and label normalization.

mod filter;
mod frames;
mod roi;
mod tracking;

use serde::{Deserialize, Serialize};

pub use filter::Biquad;
pub use frames::{select_frames, select_frames_n, FramePolicy, SELECTED_FRAMES};
pub use roi::extract_roi;
pub use tracking::{full_frame_boxes, track_roi, LkParams, Tracking};

use crate::error::{Error, Result};
use crate::series::LabelSeries;

/// Low-pass cutoff applied to SpO2 curves.
pub const LABEL_CUTOFF_HZ: f64 = 0.025;
pub const SPO2_FLOOR: f64 = 80.0;
pub const SPO2_CEIL: f64 = 100.0;

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBox {
    pub center: (f64, f64),
    pub width: usize,
    pub height: usize,
    pub frame_index: usize,
}

impl RoiBox {
    pub fn from_top_left(x: f64, y: f64, width: usize, height: usize) -> Self {
        Self { center: (x + width as f64 / 2.0, y + height as f64 / 2.0), width, height, frame_index: 0 }
    }

    pub fn top_left(&self) -> (f64, f64) {
        (self.center.0 - self.width as f64 / 2.0, self.center.1 - self.height as f64 / 2.0)
    }

    /// Integer crop rectangle `(x0, y0, w, h)` clamped inside a frame.
    pub fn clamped_rect(&self, frame_w: usize, frame_h: usize) -> (usize, usize, usize, usize) {
        let w = self.width.clamp(1, frame_w);
        let h = self.height.clamp(1, frame_h);
        let (x, y) = self.top_left();
        let x0 = (x.round().max(0.0) as usize).min(frame_w - w);
        let y0 = (y.round().max(0.0) as usize).min(frame_h - h);
        (x0, y0, w, h)
    }

    /// Moves the center so the box lies inside the frame.
    pub fn clamp_to(&mut self, frame_w: usize, frame_h: usize) {
        let half_w = (self.width.min(frame_w)) as f64 / 2.0;
        let half_h = (self.height.min(frame_h)) as f64 / 2.0;
        self.center.0 = self.center.0.clamp(half_w, frame_w as f64 - half_w);
        self.center.1 = self.center.1.clamp(half_h, frame_h as f64 - half_h);
    }
}

fn check_rate(rate_hz: f64) -> Result<()> {
    if !(rate_hz > 2.0 * LABEL_CUTOFF_HZ) {
        return Err(Error::RateTooLow(rate_hz));
    }
    Ok(())
}

/// Clamp to [80, 100], zero-phase low-pass at 0.025 Hz, clamp again.
pub fn normalize_labels(labels: &LabelSeries, rate_hz: f64) -> Result<LabelSeries> {
    check_rate(rate_hz)?;
    let clamped: Vec<f64> = labels.values.iter().map(|v| v.clamp(SPO2_FLOOR, SPO2_CEIL)).collect();
    let filtered = Biquad::butterworth_lowpass(LABEL_CUTOFF_HZ, rate_hz).filtfilt(&clamped);
    Ok(LabelSeries {
        timestamps: labels.timestamps.clone(),
        values: filtered.into_iter().map(|v| v.clamp(SPO2_FLOOR, SPO2_CEIL)).collect(),
    })
}

/// The same low-pass without clamping, for smoothing predicted series.
pub fn smooth_predictions(values: &[f64], rate_hz: f64) -> Result<Vec<f64>> {
    check_rate(rate_hz)?;
    Ok(Biquad::butterworth_lowpass(LABEL_CUTOFF_HZ, rate_hz).filtfilt(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_series_unchanged() {
        let s = LabelSeries::uniform(vec![95.0; 200], 15.0);
        let out = normalize_labels(&s, 15.0).unwrap();
        assert!(out.values.iter().all(|v| (v - 95.0).abs() < 1e-9));
    }

    #[test]
    fn out_of_range_values_are_clamped_first() {
        let mut v = vec![79.0; 50];
        v.extend(vec![101.0; 50]);
        let out = normalize_labels(&LabelSeries::uniform(v, 1.0), 1.0).unwrap();
        assert!(out.values.iter().all(|v| (80.0..=100.0).contains(v)));
        // Without the first clamp the ends would sit near 79 and 101.
        assert!(out.values[0] < 80.1);
        assert!(out.values[99] > 99.9);
    }

    #[test]
    fn low_rate_is_rejected() {
        let s = LabelSeries::uniform(vec![95.0; 10], 0.05);
        assert!(matches!(normalize_labels(&s, 0.05), Err(Error::RateTooLow(_))));
    }

    #[test]
    fn fast_oscillation_is_removed() {
        let rate = 20.0;
        let v: Vec<f64> = (0..20 * 600)
            .map(|i| 90.0 + 5.0 * (2.0 * std::f64::consts::PI * 0.5 * i as f64 / rate).sin())
            .collect();
        let out = normalize_labels(&LabelSeries::uniform(v, rate), rate).unwrap();
        // The edges carry the padding transient; judge the interior.
        let interior = &out.values[60 * 20..out.values.len() - 60 * 20];
        let amp = interior.iter().map(|v| (v - 90.0).abs()).fold(0.0, f64::max);
        assert!(amp < 0.1, "residual amplitude {amp}");
    }

    #[test]
    fn roi_box_clamping() {
        let b = RoiBox::from_top_left(-10.0, 90.0, 30, 20);
        assert_eq!(b.clamped_rect(100, 100), (0, 80, 30, 20));
        let mut c = b;
        c.clamp_to(100, 100);
        assert_eq!(c.top_left(), (0.0, 80.0));
    }

    proptest! {
        #[test]
        fn normalized_labels_stay_in_range(v in proptest::collection::vec(60.0f64..110.0, 2..300)) {
            let out = normalize_labels(&LabelSeries::uniform(v, 1.0), 1.0).unwrap();
            prop_assert!(out.values.iter().all(|v| (80.0..=100.0).contains(v)));
        }
    }
}

use super::RoiBox;
use crate::frame::RgbFrame;

/// Crops `roi` (clamped to the frame) and resizes bilinearly to `target`.
pub fn extract_roi(frame: &RgbFrame, roi: &RoiBox, target: (usize, usize)) -> RgbFrame {
    assert!(target.0 > 0 && target.1 > 0, "target size must be positive");
    let (x0, y0, w, h) = roi.clamped_rect(frame.width, frame.height);
    frame.crop(x0, y0, w, h).resize_bilinear(target.0, target.1)
}

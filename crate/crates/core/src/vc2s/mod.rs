//! The dual-path convolutional regressor and its training loop.

pub mod layers;
mod model;
mod train;

pub use model::{
    backward, batch_gradients, forward, forward_trace, loss, loss_weight, ModelParams, Sample, Tensor, Trace,
    CHECKER_PATCHES, MIN_ROI_SIDE, PARAM_NAMES,
};
pub use train::{cosine_lr, predict, train, train_with, AdamW, Checkpoint, TrainConfig, TrainOutcome, CHECKPOINT_VERSION};

use crate::frame::RgbFrame;
use crate::tissue::ColorCheckerSet;

/// Checker patch means as a `[3, 24, 1]` channel-major tensor in [0, 1].
pub fn checker_tensor(checker: &ColorCheckerSet) -> Vec<f64> {
    let mut out = vec![0.0; 3 * CHECKER_PATCHES];
    for (i, p) in checker.patches().iter().enumerate() {
        for c in 0..3 {
            out[c * CHECKER_PATCHES + i] = p.rgb.0[c] / 255.0;
        }
    }
    out
}

/// Input for the disabled color branch.
pub fn blank_checker() -> Vec<f64> {
    vec![0.0; 3 * CHECKER_PATCHES]
}

pub fn sample_from_frame(roi: &RgbFrame, checker: Vec<f64>) -> crate::Result<Sample> {
    Sample::new(roi.to_planar_unit(), roi.height, roi.width, checker)
}

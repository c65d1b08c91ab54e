use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, Shape3};
use crate::error::{Error, Result};

pub const VIDEO_FILTERS: usize = 16;
pub const COLOR_FILTERS: usize = 16;
pub const FUSE_FILTERS: usize = 64;
pub const KERNEL: usize = 5;
pub const POOLED: usize = 10;
pub const HIDDEN: usize = 64;
pub const CHECKER_PATCHES: usize = 24;
/// Smallest ROI side for which both convolutions and pools are valid.
pub const MIN_ROI_SIDE: usize = 20;

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        Self { dims: dims.to_vec(), values: vec![0.0; dims.iter().product()] }
    }

    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != values.len() {
            return Err(Error::ShapeMismatch(format!("dims {dims:?} for {} values", values.len())));
        }
        Ok(Self { dims, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Network weights. Also used to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub conv_video_w: Tensor,
    pub conv_video_b: Tensor,
    pub conv_color_w: Tensor,
    pub conv_color_b: Tensor,
    pub conv_fuse_w: Tensor,
    pub conv_fuse_b: Tensor,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
}

pub const PARAM_NAMES: [&str; 10] = [
    "conv_video_w",
    "conv_video_b",
    "conv_color_w",
    "conv_color_b",
    "conv_fuse_w",
    "conv_fuse_b",
    "fc1_w",
    "fc1_b",
    "fc2_w",
    "fc2_b",
];

impl ModelParams {
    pub fn zeros() -> Self {
        let fc_in = FUSE_FILTERS * POOLED * POOLED;
        Self {
            conv_video_w: Tensor::zeros(&[VIDEO_FILTERS, 3, KERNEL, KERNEL]),
            conv_video_b: Tensor::zeros(&[VIDEO_FILTERS]),
            conv_color_w: Tensor::zeros(&[COLOR_FILTERS, 3, 1, 1]),
            conv_color_b: Tensor::zeros(&[COLOR_FILTERS]),
            conv_fuse_w: Tensor::zeros(&[FUSE_FILTERS, VIDEO_FILTERS + COLOR_FILTERS, KERNEL, KERNEL]),
            conv_fuse_b: Tensor::zeros(&[FUSE_FILTERS]),
            fc1_w: Tensor::zeros(&[HIDDEN, fc_in]),
            fc1_b: Tensor::zeros(&[HIDDEN]),
            fc2_w: Tensor::zeros(&[1, HIDDEN]),
            fc2_b: Tensor::zeros(&[1]),
        }
    }

    /// Uniform fan-in initialization: every weight and bias of a layer is
    /// drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn init<R: Rng>(rng: &mut R) -> Self {
        let mut p = Self::zeros();
        for pair in p.tensors_mut().chunks_mut(2) {
            let fan_in: usize = pair[0].dims[1..].iter().product();
            let bound = 1.0 / (fan_in as f64).sqrt();
            for t in pair.iter_mut() {
                for v in &mut t.values {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        p
    }

    pub fn tensors(&self) -> [&Tensor; 10] {
        [
            &self.conv_video_w,
            &self.conv_video_b,
            &self.conv_color_w,
            &self.conv_color_b,
            &self.conv_fuse_w,
            &self.conv_fuse_b,
            &self.fc1_w,
            &self.fc1_b,
            &self.fc2_w,
            &self.fc2_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.conv_video_w,
            &mut self.conv_video_b,
            &mut self.conv_color_w,
            &mut self.conv_color_b,
            &mut self.conv_fuse_w,
            &mut self.conv_fuse_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.values.iter().all(|v| v.is_finite()))
    }

    /// Checks every tensor against the fixed architecture.
    pub fn validate(&self) -> Result<()> {
        let reference = Self::zeros();
        for ((name, t), r) in PARAM_NAMES.iter().zip(self.tensors()).zip(reference.tensors()) {
            if t.dims != r.dims || t.values.len() != r.values.len() {
                return Err(Error::ShapeMismatch(format!("{name}: expected {:?}, got {:?}", r.dims, t.dims)));
            }
        }
        Ok(())
    }
}

/// One network input: a `[3, h, w]` ROI and the `[3, 24, 1]` checker
/// reading, both scaled to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub roi: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub checker: Vec<f64>,
}

impl Sample {
    pub fn new(roi: Vec<f64>, height: usize, width: usize, checker: Vec<f64>) -> Result<Self> {
        if roi.len() != 3 * height * width {
            return Err(Error::ShapeMismatch(format!("roi has {} values, expected 3x{height}x{width}", roi.len())));
        }
        if height < MIN_ROI_SIDE || width < MIN_ROI_SIDE {
            return Err(Error::ShapeMismatch(format!("roi {height}x{width} is smaller than {MIN_ROI_SIDE}x{MIN_ROI_SIDE}")));
        }
        if checker.len() != 3 * CHECKER_PATCHES {
            return Err(Error::ShapeMismatch(format!("checker has {} values, expected 3x24x1", checker.len())));
        }
        Ok(Self { roi, height, width, checker })
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub video_act: Vec<f64>,
    pub video_act_shape: Shape3,
    pub video_arg: Vec<usize>,
    pub video_pooled: Shape3,
    pub color_act: Vec<f64>,
    pub color_arg: Vec<usize>,
    pub color_pooled: Shape3,
    pub fused_in: Vec<f64>,
    pub fuse_act: Vec<f64>,
    pub fuse_act_shape: Shape3,
    pub fuse_arg: Vec<usize>,
    pub fuse_pooled: Shape3,
    pub flat: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: f64,
}

pub fn forward(p: &ModelParams, x: &Sample) -> f64 {
    forward_trace(p, x).output
}

pub fn forward_trace(p: &ModelParams, x: &Sample) -> Trace {
    let vs = Shape3::new(3, x.height, x.width);
    let (mut video_act, video_act_shape) = layers::conv2d(&x.roi, vs, &p.conv_video_w.values, &p.conv_video_b.values, KERNEL);
    layers::relu(&mut video_act);
    let (video_out, video_arg, video_pooled) = layers::maxpool2(&video_act, video_act_shape, false);

    let cs = Shape3::new(3, CHECKER_PATCHES, 1);
    let (mut color_act, color_shape) = layers::conv2d(&x.checker, cs, &p.conv_color_w.values, &p.conv_color_b.values, 1);
    layers::relu(&mut color_act);
    let (color_out, color_arg, color_pooled) = layers::maxpool2(&color_act, color_shape, true);
    let (color_up, _) = layers::adaptive_avg_pool(&color_out, color_pooled, video_pooled.h, video_pooled.w);

    let mut fused_in = video_out;
    fused_in.extend_from_slice(&color_up);
    let fs = Shape3::new(VIDEO_FILTERS + COLOR_FILTERS, video_pooled.h, video_pooled.w);
    let (mut fuse_act, fuse_act_shape) = layers::conv2d(&fused_in, fs, &p.conv_fuse_w.values, &p.conv_fuse_b.values, KERNEL);
    layers::relu(&mut fuse_act);
    let (fuse_out, fuse_arg, fuse_pooled) = layers::maxpool2(&fuse_act, fuse_act_shape, false);
    let (flat, _) = layers::adaptive_avg_pool(&fuse_out, fuse_pooled, POOLED, POOLED);

    let mut hidden = layers::linear(&flat, &p.fc1_w.values, &p.fc1_b.values);
    layers::relu(&mut hidden);
    let output = layers::linear(&hidden, &p.fc2_w.values, &p.fc2_b.values)[0];
    Trace {
        video_act,
        video_act_shape,
        video_arg,
        video_pooled,
        color_act,
        color_arg,
        color_pooled,
        fused_in,
        fuse_act,
        fuse_act_shape,
        fuse_arg,
        fuse_pooled,
        flat,
        hidden,
        output,
    }
}

/// Adds `d loss / d params` for one sample to `grads`, given
/// `dout = d loss / d output`.
pub fn backward(p: &ModelParams, x: &Sample, t: &Trace, dout: f64, grads: &mut ModelParams) {
    let mut dhidden =
        layers::linear_backward(&t.hidden, &p.fc2_w.values, &[dout], &mut grads.fc2_w.values, &mut grads.fc2_b.values, true);
    layers::relu_backward(&t.hidden, &mut dhidden);
    let dflat =
        layers::linear_backward(&t.flat, &p.fc1_w.values, &dhidden, &mut grads.fc1_w.values, &mut grads.fc1_b.values, true);

    let pooled_grid = Shape3::new(FUSE_FILTERS, POOLED, POOLED);
    let dfuse_out = layers::adaptive_avg_pool_backward(&dflat, t.fuse_pooled, pooled_grid);
    let mut dfuse_act = layers::maxpool2_backward(&t.fuse_arg, &dfuse_out, t.fuse_act.len());
    layers::relu_backward(&t.fuse_act, &mut dfuse_act);
    let fs = Shape3::new(VIDEO_FILTERS + COLOR_FILTERS, t.video_pooled.h, t.video_pooled.w);
    let dfused = layers::conv2d_backward(
        &t.fused_in,
        fs,
        &p.conv_fuse_w.values,
        KERNEL,
        &dfuse_act,
        t.fuse_act_shape,
        &mut grads.conv_fuse_w.values,
        &mut grads.conv_fuse_b.values,
        true,
    );
    let (dvideo_out, dcolor_up) = dfused.split_at(VIDEO_FILTERS * t.video_pooled.plane());

    let mut dvideo_act = layers::maxpool2_backward(&t.video_arg, dvideo_out, t.video_act.len());
    layers::relu_backward(&t.video_act, &mut dvideo_act);
    layers::conv2d_backward(
        &x.roi,
        Shape3::new(3, x.height, x.width),
        &p.conv_video_w.values,
        KERNEL,
        &dvideo_act,
        t.video_act_shape,
        &mut grads.conv_video_w.values,
        &mut grads.conv_video_b.values,
        false,
    );

    let up_shape = Shape3::new(COLOR_FILTERS, t.video_pooled.h, t.video_pooled.w);
    let dcolor_out = layers::adaptive_avg_pool_backward(dcolor_up, t.color_pooled, up_shape);
    let mut dcolor_act = layers::maxpool2_backward(&t.color_arg, &dcolor_out, t.color_act.len());
    layers::relu_backward(&t.color_act, &mut dcolor_act);
    layers::conv2d_backward(
        &x.checker,
        Shape3::new(3, CHECKER_PATCHES, 1),
        &p.conv_color_w.values,
        1,
        &dcolor_act,
        Shape3::new(COLOR_FILTERS, CHECKER_PATCHES, 1),
        &mut grads.conv_color_w.values,
        &mut grads.conv_color_b.values,
        false,
    );
}

/// Per-sample weight `1 - y/100`.
pub fn loss_weight(label: f64) -> f64 {
    1.0 - label / 100.0
}

/// Mean over the batch of `(out - y)^2 (1 - y/100)`.
pub fn loss(outputs: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(outputs.len(), labels.len());
    assert!(!outputs.is_empty(), "empty batch");
    outputs.iter().zip(labels).map(|(o, y)| (o - y).powi(2) * loss_weight(*y)).sum::<f64>() / outputs.len() as f64
}

/// Loss and accumulated gradients over a batch.
pub fn batch_gradients(p: &ModelParams, batch: &[(&Sample, f64)]) -> (f64, ModelParams) {
    let mut grads = ModelParams::zeros();
    let n = batch.len() as f64;
    let mut total = 0.0;
    for (x, y) in batch {
        let t = forward_trace(p, x);
        let w = loss_weight(*y);
        total += (t.output - y).powi(2) * w;
        let dout = 2.0 * (t.output - y) * w / n;
        backward(p, x, &t, dout, &mut grads);
    }
    (total / n, grads)
}

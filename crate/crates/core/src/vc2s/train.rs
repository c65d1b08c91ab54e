use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{batch_gradients, forward, ModelParams, Sample};
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            learning_rate: 1e-3,
            batch_size: 32,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Invalid(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cosine annealing from `lr0` at epoch 0 to 0 at `t_max`.
pub fn cosine_lr(lr0: f64, epoch: usize, t_max: usize) -> f64 {
    lr0 * (1.0 + (std::f64::consts::PI * epoch as f64 / t_max as f64).cos()) / 2.0
}

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    m: ModelParams,
    v: ModelParams,
    step: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl AdamW {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            m: ModelParams::zeros(),
            v: ModelParams::zeros(),
            step: 0,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let decay = 1.0 - lr * self.weight_decay;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in
            params.tensors_mut().into_iter().zip(grads.tensors()).zip(self.m.tensors_mut()).zip(self.v.tensors_mut())
        {
            for i in 0..p.values.len() {
                let gi = g.values[i];
                m.values[i] = b1 * m.values[i] + (1.0 - b1) * gi;
                v.values[i] = b2 * v.values[i] + (1.0 - b2) * gi * gi;
                let mhat = m.values[i] / c1;
                let vhat = v.values[i] / c2;
                p.values[i] = p.values[i] * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Minibatch training. Initialization draws from stream 0 of the seeded
/// generator and shuffling from stream 1, so runs are reproducible.
pub fn train(samples: &[Sample], labels: &[f64], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if samples.len() != labels.len() {
        return Err(Error::LengthMismatch(samples.len(), labels.len()));
    }
    train_with(labels, |i| Ok(samples[i].clone()), cfg)
}

/// Like [`train`], but builds each input on demand so large training sets
/// need not be held as floating-point tensors.
pub fn train_with<F>(labels: &[f64], sample: F, cfg: &TrainConfig) -> Result<TrainOutcome>
where
    F: Fn(usize) -> Result<Sample>,
{
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    shuffle_rng.set_stream(1);
    let mut params = ModelParams::init(&mut init_rng);
    let mut opt = AdamW::new(cfg);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.learning_rate, epoch, cfg.epochs);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let inputs = chunk.iter().map(|&i| sample(i)).collect::<Result<Vec<_>>>()?;
            let batch: Vec<(&Sample, f64)> = inputs.iter().zip(chunk).map(|(x, &i)| (x, labels[i])).collect();
            let (loss, grads) = batch_gradients(&params, &batch);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += loss * chunk.len() as f64;
            opt.update(&mut params, &grads, lr);
            if !params.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
        }
        loss_curve.push(epoch_loss / labels.len() as f64);
    }
    Ok(TrainOutcome { params, loss_curve })
}

/// Raw network output for each sample.
pub fn predict(params: &ModelParams, samples: &[Sample]) -> Vec<f64> {
    samples.iter().map(|s| forward(params, s)).collect()
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub rng_seed: u64,
    /// Whether the color branch saw real checker readings during training.
    pub color_check: bool,
    /// ROI size the model was trained on, `(width, height)`.
    pub roi_size: (usize, usize),
    pub loss_curve: Vec<f64>,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::write_json_compact(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let c: Checkpoint = fsutil::read_json(path)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!(
                "{}: checkpoint version {} (expected {CHECKPOINT_VERSION})",
                path.display(),
                c.version
            )));
        }
        c.params.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn flat_samples(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let level: f64 = rng.random_range(0.3..0.7);
                let roi = (0..3 * 20 * 20).map(|_| level + rng.random_range(-0.02..0.02)).collect();
                Sample::new(roi, 20, 20, vec![0.5; 72]).unwrap()
            })
            .collect()
    }

    #[test]
    fn schedule_endpoints() {
        assert!((cosine_lr(1e-3, 0, 15) - 1e-3).abs() < 1e-12);
        assert!(cosine_lr(1e-3, 15, 15).abs() < 1e-12);
        assert!((cosine_lr(2.0, 5, 10) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adamw_noop_without_gradient_or_decay() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ModelParams::init(&mut rng);
        let before = p.clone();
        let cfg = TrainConfig { weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(&cfg);
        opt.update(&mut p, &ModelParams::zeros(), 1e-3);
        assert_eq!(p, before);
    }

    #[test]
    fn zero_learning_rate_keeps_initial_params() {
        let xs = flat_samples(8, 2);
        let ys = vec![95.0; 8];
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 2, batch_size: 4, ..Default::default() };
        let out = train(&xs, &ys, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        assert_eq!(out.params, ModelParams::init(&mut rng));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let xs = flat_samples(10, 3);
        let ys: Vec<f64> = (0..10).map(|i| 88.0 + i as f64).collect();
        let cfg = TrainConfig { epochs: 2, batch_size: 4, rng_seed: 9, ..Default::default() };
        let a = train(&xs, &ys, &cfg).unwrap();
        let b = train(&xs, &ys, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_labels_pull_output_to_constant() {
        let xs = flat_samples(16, 4);
        let ys = vec![92.0; 16];
        let cfg = TrainConfig { epochs: 4, batch_size: 8, learning_rate: 1e-2, ..Default::default() };
        let out = train(&xs, &ys, &cfg).unwrap();
        assert!(out.loss_curve[1] < out.loss_curve[0] && out.loss_curve[2] < out.loss_curve[1], "{:?}", out.loss_curve);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let start = forward(&ModelParams::init(&mut rng), &xs[0]);
        let end = forward(&out.params, &xs[0]);
        assert!((end - 92.0).abs() < (start - 92.0).abs());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: TrainConfig::default(),
            rng_seed: 0,
            color_check: true,
            roi_size: (24, 24),
            loss_curve: vec![1.5, 0.25],
            params: ModelParams::init(&mut rng),
        };
        let path = dir.path().join("model.json");
        ck.write(&path).unwrap();
        assert_eq!(Checkpoint::read(&path).unwrap(), ck);
    }
}

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::SplitData;
use crate::error::{Error, Result};
use crate::rng::{mix_seed, stream_rng};
use crate::tensor::DatasetManifest;

use super::grad::{loss_and_grad, Sample};
use super::{FeatureSpec, HeadKind, ToyModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub head: HeadKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub m_train: usize,
    pub m_pred: usize,
    pub rank: usize,
    pub scale_p: f64,
    pub scale_d: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            head: HeadKind::Deterministic,
            lr: 1e-3,
            epochs: 20,
            batch_size: 16,
            m_train: 32,
            m_pred: 16,
            rank: 10,
            scale_p: 0.05,
            scale_d: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.head == HeadKind::Gaussian && (self.m_train == 0 || self.m_pred == 0) {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub head: HeadKind,
    pub epochs: Vec<EpochLog>,
}

fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    0.5 * base * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

/// Trains a fresh model on `split`; the learning rate decays along a cosine
/// from `cfg.lr` at the first step to 0 after the last.
pub fn train(
    manifest: &DatasetManifest,
    split: &SplitData,
    cfg: &TrainConfig,
) -> Result<(ToyModelParams, TrainingLog)> {
    cfg.validate()?;
    manifest.validate()?;
    if split.is_empty() {
        return Err(Error::EmptyInput("training split has no images".into()));
    }
    let shape = manifest.image_shape;
    let features = FeatureSpec {
        timesteps: shape.timesteps,
        channels: shape.channels,
        channel_std: manifest.channel_std.clone(),
    };
    let mut params = ToyModelParams::init(
        cfg.head,
        manifest.num_classes,
        cfg.rank,
        cfg.scale_p,
        cfg.scale_d,
        features,
        mix_seed(cfg.seed, 0),
    )?;
    let n = split.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut adam = Adam::new(params.num_weights());
    let mut log = TrainingLog {
        head: cfg.head,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream_rng(mix_seed(cfg.seed, 1), epoch as u64));
        let mut losses = Vec::with_capacity(steps_per_epoch);
        let lr_start = cosine_lr(cfg.lr, step, total);
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<Sample<'_>> = idx
                .iter()
                .map(|&i| Sample {
                    image: split.image(i),
                    labels: split.labels_of(i),
                })
                .filter(|x| {
                    x.labels
                        .iter()
                        .any(|&y| y >= 0 && (y as usize) < params.classes)
                })
                .collect();
            if batch.is_empty() {
                step += 1;
                continue;
            }
            let noise = mix_seed(mix_seed(cfg.seed, 2), step as u64);
            let (loss, grad) = loss_and_grad(&params, shape, &batch, cfg.m_train, noise)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training { epoch });
            }
            adam.step(&mut params.weights, &grad, cosine_lr(cfg.lr, step, total));
            losses.push(loss);
            step += 1;
        }
        let loss = crate::par::pairwise_sum(&losses) / losses.len().max(1) as f64;
        if params.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Training { epoch });
        }
        log.epochs.push(EpochLog {
            epoch,
            loss,
            lr: lr_start,
        });
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0, 10), 1e-3);
        assert!((cosine_lr(1e-3, 5, 10) - 5e-4).abs() < 1e-18);
        assert!(cosine_lr(1e-3, 10, 10).abs() < 1e-18);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(2);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[3.0, -0.5], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-8);
        assert!((p[1] + 0.9).abs() < 1e-8);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().kind(), "config");
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

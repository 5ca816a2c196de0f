//! Synthetic multi-temporal segmentation data with controllable ambiguity.
//!
//! Each image is a Voronoi partition of uniformly placed seeds; every cell
//! gets a random class and a unique instance id. A pixel of class `k` at
//! timestep `t`, channel `c` takes the value
//! `mean[k][c] + amplitude * sin(2 pi t / T + phase[k]) + N(0, noise_std^2)`.
//! Classes listed together in `ambiguous_pairs` share means and phases, so no
//! model can tell them apart.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SplitData};
use crate::error::{Error, Result};
use crate::par::map_range;
use crate::rng::{stream_rng, Rng};
use crate::tensor::{DatasetManifest, ImageShape, SplitFiles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub name: String,
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub timesteps: usize,
    pub channels: usize,
    pub cells_per_image: usize,
    pub ambiguous_pairs: Vec<(usize, usize)>,
    pub noise_std: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            name: "synthetic".into(),
            classes: 5,
            height: 64,
            width: 64,
            timesteps: 4,
            channels: 4,
            cells_per_image: 8,
            ambiguous_pairs: Vec::new(),
            noise_std: 0.1,
            amplitude: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config(format!(
                "image must be at least 8x8, got {}x{}",
                self.height, self.width
            )));
        }
        if self.timesteps == 0 || self.channels == 0 {
            return Err(Error::Config(
                "timesteps and channels must be positive".into(),
            ));
        }
        if self.cells_per_image == 0 || self.cells_per_image > self.height * self.width {
            return Err(Error::Config(format!(
                "cells_per_image {} outside [1, {}]",
                self.cells_per_image,
                self.height * self.width
            )));
        }
        for &(a, b) in &self.ambiguous_pairs {
            if a == b || a >= self.classes || b >= self.classes {
                return Err(Error::Config(format!("invalid ambiguous pair ({a}, {b})")));
            }
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Config(format!(
                "noise_std {} must be >= 0",
                self.noise_std
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Config("amplitude must be finite".into()));
        }
        Ok(())
    }

    pub fn image_shape(&self) -> ImageShape {
        ImageShape {
            timesteps: self.timesteps,
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Per-class signal shared by every image of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSignals {
    /// `[K][C]`
    pub means: Vec<Vec<f64>>,
    pub phases: Vec<f64>,
}

const SIGNAL_STREAM: u64 = u64::MAX;

pub fn class_signals(cfg: &SynthConfig) -> ClassSignals {
    let mut rng = stream_rng(cfg.seed, SIGNAL_STREAM);
    let mut means: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| {
            (0..cfg.channels)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect();
    let mut phases: Vec<f64> = (0..cfg.classes)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    for &(a, b) in &cfg.ambiguous_pairs {
        means[b] = means[a].clone();
        phases[b] = phases[a];
    }
    ClassSignals { means, phases }
}

struct Rendered {
    image: Vec<f32>,
    labels: Vec<i32>,
    instances: Vec<i32>,
}

fn render_image(cfg: &SynthConfig, signals: &ClassSignals, index: u64) -> Rendered {
    let mut rng: Rng = stream_rng(cfg.seed, index);
    let (h, w) = (cfg.height, cfg.width);
    let seeds: Vec<(f64, f64)> = (0..cfg.cells_per_image)
        .map(|_| (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64)))
        .collect();
    let cell_class: Vec<i32> = (0..cfg.cells_per_image)
        .map(|_| rng.gen_range(0..cfg.classes) as i32)
        .collect();

    let mut instances = vec![0i32; h * w];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &(sx, sy)) in seeds.iter().enumerate() {
                let d = (px - sx).powi(2) + (py - sy).powi(2);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            instances[y * w + x] = best as i32;
        }
    }
    let labels: Vec<i32> = instances.iter().map(|&c| cell_class[c as usize]).collect();

    let noise = Normal::new(0.0, cfg.noise_std).expect("validated noise std");
    let s = h * w;
    let mut image = vec![0f32; cfg.timesteps * cfg.channels * s];
    for t in 0..cfg.timesteps {
        let angle = std::f64::consts::TAU * t as f64 / cfg.timesteps as f64;
        let seasonal: Vec<f64> = signals
            .phases
            .iter()
            .map(|ph| cfg.amplitude * (angle + ph).sin())
            .collect();
        for c in 0..cfg.channels {
            let plane = &mut image[(t * cfg.channels + c) * s..(t * cfg.channels + c + 1) * s];
            for (v, &k) in plane.iter_mut().zip(&labels) {
                let k = k as usize;
                *v = (signals.means[k][c] + seasonal[k] + noise.sample(&mut rng)) as f32;
            }
        }
    }
    Rendered {
        image,
        labels,
        instances,
    }
}

/// Renders `n` images whose global indices start at `first`.
pub fn generate_images(cfg: &SynthConfig, first: usize, n: usize) -> Result<SplitData> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Config("need at least one image".into()));
    }
    let signals = class_signals(cfg);
    let rendered = map_range(n, |i| render_image(cfg, &signals, (first + i) as u64));
    let mut out = SplitData {
        shape: cfg.image_shape(),
        images: Vec::with_capacity(n * cfg.image_shape().len()),
        labels: Vec::with_capacity(n * cfg.height * cfg.width),
        instances: Vec::with_capacity(n * cfg.height * cfg.width),
        noise: None,
    };
    for r in rendered {
        out.images.extend_from_slice(&r.image);
        out.labels.extend_from_slice(&r.labels);
        out.instances.extend_from_slice(&r.instances);
    }
    Ok(out)
}

/// Population standard deviation of each channel over all images, timesteps
/// and pixels of a split.
pub fn channel_std(split: &SplitData) -> Vec<f64> {
    let ImageShape {
        timesteps,
        channels,
        ..
    } = split.shape;
    let s = split.shape.pixels();
    (0..channels)
        .map(|c| {
            let planes = || {
                (0..split.len()).flat_map(move |i| {
                    let img = split.image(i);
                    (0..timesteps).flat_map(move |t| {
                        img[(t * channels + c) * s..(t * channels + c + 1) * s].iter()
                    })
                })
            };
            let n = (split.len() * timesteps * s) as f64;
            let mean = planes().map(|&v| v as f64).sum::<f64>() / n;
            let var = planes().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect()
}

/// Generates train/val/test splits (images numbered consecutively across
/// splits) and a manifest whose `channel_std` comes from the training split.
pub fn generate_dataset(cfg: &SynthConfig, sizes: SplitSizes) -> Result<Dataset> {
    cfg.validate()?;
    if sizes.train == 0 {
        return Err(Error::Config(
            "training split must hold at least one image".into(),
        ));
    }
    let train = generate_images(cfg, 0, sizes.train)?;
    let val = (sizes.val > 0)
        .then(|| generate_images(cfg, sizes.train, sizes.val))
        .transpose()?;
    let test = (sizes.test > 0)
        .then(|| generate_images(cfg, sizes.train + sizes.val, sizes.test))
        .transpose()?;
    let std = channel_std(&train);
    if std.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Config(
            "training split has a constant channel; increase noise_std or images".into(),
        ));
    }
    let manifest = DatasetManifest {
        name: cfg.name.clone(),
        num_classes: cfg.classes,
        void_class_id: Some(cfg.classes as i32),
        image_shape: cfg.image_shape(),
        channel_std: std,
        splits: SplitFiles::default(),
    };
    Ok(Dataset {
        manifest,
        train,
        val,
        test,
    })
}

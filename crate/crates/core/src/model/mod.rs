//! A per-pixel linear segmentation model with either a deterministic softmax
//! head or a low-rank Gaussian logit head, trained with analytic gradients.
//!
//! All parameters live in one flat vector so the optimiser and gradient
//! checks can treat them uniformly. Layout, with `F` features:
//!
//! * deterministic: `W (K x F)`, `b (K)`
//! * Gaussian: `W_mu (K x F)`, `b_mu (K)`, `W_d (K x F)`, `b_d (K)`,
//!   `W_P (RK x F)`, `b_P (RK)`; output `k*R + r` of the P head is
//!   entry `(k, r)` of the pixel's `K x R` block.

pub mod features;
mod grad;
mod io;
mod train;

pub use features::FeatureSpec;
pub use grad::{loss_and_grad, Sample};
pub use io::{load_model, save_model};
pub use train::{train, Adam, EpochLog, TrainConfig, TrainingLog};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::GaussLogitParams;
use crate::par::map_range;
use crate::probs::{LogitTensor, ProbTensor};
use crate::rng::stream_rng;
use crate::tensor::ImageShape;

/// Floor added to every diagonal variance.
pub const D_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Deterministic,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelParams {
    pub kind: HeadKind,
    pub classes: usize,
    pub rank: usize,
    pub scale_p: f64,
    pub scale_d: f64,
    pub features: FeatureSpec,
    #[serde(skip)]
    pub weights: Vec<f64>,
}

/// Offset and shape of one linear block inside the flat weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Block {
    pub w: usize,
    pub b: usize,
    pub out: usize,
}

impl ToyModelParams {
    /// Zero-initialised parameters.
    pub fn zeros(
        kind: HeadKind,
        classes: usize,
        rank: usize,
        scale_p: f64,
        scale_d: f64,
        features: FeatureSpec,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if kind == HeadKind::Gaussian && !(scale_p >= 0.0 && scale_d > 0.0) {
            return Err(Error::Config(format!(
                "scale factors must satisfy s_P >= 0, s_D > 0 (got {scale_p}, {scale_d})"
            )));
        }
        if features.channel_std.len() != features.channels
            || features.channel_std.iter().any(|s| !(*s > 0.0))
        {
            return Err(Error::Manifest(
                "channel std must be positive per channel".into(),
            ));
        }
        let mut p = ToyModelParams {
            kind,
            classes,
            rank: if kind == HeadKind::Gaussian { rank } else { 0 },
            scale_p,
            scale_d,
            features,
            weights: Vec::new(),
        };
        p.weights = vec![0.0; p.num_weights()];
        Ok(p)
    }

    /// Gaussian-initialised weights (std `1/sqrt(F)`) with zero biases.
    pub fn init(
        kind: HeadKind,
        classes: usize,
        rank: usize,
        scale_p: f64,
        scale_d: f64,
        features: FeatureSpec,
        seed: u64,
    ) -> Result<Self> {
        let mut p = Self::zeros(kind, classes, rank, scale_p, scale_d, features)?;
        let f = p.feature_len();
        let normal = Normal::new(0.0, 1.0 / (f as f64).sqrt()).expect("positive std");
        let mut rng = stream_rng(seed, 0);
        for block in p.blocks() {
            for v in &mut p.weights[block.w..block.w + block.out * f] {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(p)
    }

    pub fn feature_len(&self) -> usize {
        self.features.len()
    }

    pub(crate) fn blocks(&self) -> Vec<Block> {
        let f = self.feature_len();
        let outs = match self.kind {
            HeadKind::Deterministic => vec![self.classes],
            HeadKind::Gaussian => vec![self.classes, self.classes, self.rank * self.classes],
        };
        let mut off = 0;
        outs.into_iter()
            .map(|out| {
                let b = Block {
                    w: off,
                    b: off + out * f,
                    out,
                };
                off += out * (f + 1);
                b
            })
            .collect()
    }

    pub fn num_weights(&self) -> usize {
        self.blocks()
            .iter()
            .map(|b| b.out * (self.feature_len() + 1))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.num_weights() {
            return Err(Error::Shape(format!(
                "model holds {} weights, layout needs {}",
                self.weights.len(),
                self.num_weights()
            )));
        }
        if self.weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("model has non-finite weights".into()));
        }
        Ok(())
    }

    fn features_of(&self, shape: ImageShape, image: &[f32]) -> Result<Vec<f64>> {
        features::extract(&self.features, shape, image)
    }

    /// `out[i, o] = W[o] . f_i + b[o]` for one block.
    pub(crate) fn apply_block(&self, block: Block, feats: &[f64], pixels: usize) -> Vec<f64> {
        let f = self.feature_len();
        let w = &self.weights[block.w..block.w + block.out * f];
        let b = &self.weights[block.b..block.b + block.out];
        let mut out = vec![0.0; pixels * block.out];
        for (fi, oi) in feats.chunks_exact(f).zip(out.chunks_exact_mut(block.out)) {
            for (o, v) in oi.iter_mut().enumerate() {
                let row = &w[o * f..(o + 1) * f];
                *v = b[o] + row.iter().zip(fi).map(|(a, c)| a * c).sum::<f64>();
            }
        }
        out
    }

    fn require(&self, kind: HeadKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Config(format!(
                "operation needs a {kind:?} head, model has {:?}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Logits of the deterministic head.
    pub fn forward_logits(&self, shape: ImageShape, image: &[f32]) -> Result<LogitTensor> {
        self.require(HeadKind::Deterministic)?;
        let feats = self.features_of(shape, image)?;
        let s = shape.pixels();
        LogitTensor::new(
            s,
            self.classes,
            self.apply_block(self.blocks()[0], &feats, s),
        )
    }

    /// Softmax probabilities and argmax labels of the deterministic head.
    pub fn predict_deterministic(
        &self,
        shape: ImageShape,
        image: &[f32],
    ) -> Result<(ProbTensor, Vec<i32>)> {
        let probs = self.forward_logits(shape, image)?.softmax();
        let labels = probs.argmax();
        Ok((probs, labels))
    }

    /// Low-rank Gaussian over the image's flattened logits.
    pub fn forward_gauss(&self, shape: ImageShape, image: &[f32]) -> Result<GaussLogitParams> {
        self.require(HeadKind::Gaussian)?;
        let feats = self.features_of(shape, image)?;
        let heads = self.gauss_heads(&feats, shape.pixels());
        heads.to_params(self)
    }

    pub(crate) fn gauss_heads(&self, feats: &[f64], pixels: usize) -> GaussHeads {
        let blocks = self.blocks();
        GaussHeads {
            pixels,
            mu: self.apply_block(blocks[0], feats, pixels),
            pre_d: self.apply_block(blocks[1], feats, pixels),
            pre_p: self.apply_block(blocks[2], feats, pixels),
        }
    }
}

/// Raw head outputs before the positivity and scale transforms.
pub(crate) struct GaussHeads {
    pub pixels: usize,
    pub mu: Vec<f64>,
    pub pre_d: Vec<f64>,
    pub pre_p: Vec<f64>,
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl GaussHeads {
    pub fn to_params(&self, m: &ToyModelParams) -> Result<GaussLogitParams> {
        let d: Vec<f64> = self
            .pre_d
            .iter()
            .map(|&a| m.scale_d * softplus(a) + D_FLOOR)
            .collect();
        let p: Vec<f64> = self.pre_p.iter().map(|&q| m.scale_p * q).collect();
        GaussLogitParams::new(self.pixels, m.classes, m.rank, self.mu.clone(), p, d)
    }
}

/// Everything a model says about one image.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Softmax output, or Monte-Carlo marginals for the Gaussian head.
    pub probs: ProbTensor,
    pub labels: Vec<i32>,
    pub logits: Option<LogitTensor>,
    pub gauss: Option<GaussLogitParams>,
}

impl ToyModelParams {
    /// Predicts one image; the Gaussian head uses `m` samples drawn from
    /// `seed` and takes the argmax of the marginals.
    pub fn predict(
        &self,
        shape: ImageShape,
        image: &[f32],
        m: usize,
        seed: u64,
    ) -> Result<Prediction> {
        match self.kind {
            HeadKind::Deterministic => {
                let logits = self.forward_logits(shape, image)?;
                let probs = logits.softmax();
                Ok(Prediction {
                    labels: probs.argmax(),
                    probs,
                    logits: Some(logits),
                    gauss: None,
                })
            }
            HeadKind::Gaussian => {
                let g = self.forward_gauss(shape, image)?;
                let probs = crate::gauss::marginal_probs(&g, m, seed)?;
                Ok(Prediction {
                    labels: probs.argmax(),
                    probs,
                    logits: None,
                    gauss: Some(g),
                })
            }
        }
    }

    /// Gaussian head output, or the deterministic logits as a point mass.
    pub fn gauss_or_point_mass(
        &self,
        shape: ImageShape,
        image: &[f32],
    ) -> Result<GaussLogitParams> {
        match self.kind {
            HeadKind::Gaussian => self.forward_gauss(shape, image),
            HeadKind::Deterministic => {
                let logits = self.forward_logits(shape, image)?;
                GaussLogitParams::point_mass(
                    logits.pixels(),
                    logits.classes(),
                    logits.into_data(),
                    D_FLOOR,
                )
            }
        }
    }
}

/// Runs the deterministic head over every image of a split.
pub fn predict_split_deterministic(
    params: &ToyModelParams,
    shape: ImageShape,
    images: &[f32],
) -> Result<Vec<LogitTensor>> {
    let n = images.len() / shape.len();
    map_range(n, |i| {
        params.forward_logits(shape, &images[i * shape.len()..(i + 1) * shape.len()])
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> FeatureSpec {
        FeatureSpec {
            timesteps: 1,
            channels: 2,
            channel_std: vec![1.0, 2.0],
        }
    }

    fn shape() -> ImageShape {
        ImageShape {
            timesteps: 1,
            channels: 2,
            height: 3,
            width: 3,
        }
    }

    #[test]
    fn zero_gaussian_head() {
        let m = ToyModelParams::zeros(HeadKind::Gaussian, 3, 2, 0.05, 0.05, spec()).unwrap();
        let img: Vec<f32> = (0..18).map(|v| v as f32 * 0.1).collect();
        let g = m.forward_gauss(shape(), &img).unwrap();
        assert!(g.mu().iter().all(|&v| v == 0.0));
        assert!(g.p().iter().all(|&v| v == 0.0));
        let want = 0.05 * 2f64.ln() + D_FLOOR;
        assert!(g.d().iter().all(|&v| (v - want).abs() < 1e-15));
    }

    #[test]
    fn identical_pixels_share_parameters() {
        let m = ToyModelParams::init(HeadKind::Gaussian, 3, 2, 0.05, 0.05, spec(), 4).unwrap();
        let img = vec![0.7f32; 18];
        let g = m.forward_gauss(shape(), &img).unwrap();
        let (k, r) = (3, 2);
        for i in 1..9 {
            assert_eq!(&g.mu()[i * k..(i + 1) * k], &g.mu()[..k]);
            assert_eq!(&g.d()[i * k..(i + 1) * k], &g.d()[..k]);
            assert_eq!(&g.p()[i * k * r..(i + 1) * k * r], &g.p()[..k * r]);
        }
    }

    #[test]
    fn zero_scale_p_removes_low_rank_part() {
        let m = ToyModelParams::init(HeadKind::Gaussian, 3, 2, 0.0, 0.05, spec(), 4).unwrap();
        let img: Vec<f32> = (0..18).map(|v| v as f32).collect();
        let g = m.forward_gauss(shape(), &img).unwrap();
        assert!(g.p().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_predict_uniform() {
        let m = ToyModelParams::zeros(HeadKind::Deterministic, 4, 0, 0.0, 0.0, spec()).unwrap();
        let (p, y) = m.predict_deterministic(shape(), &[1.0; 18]).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(y.iter().all(|&c| c == 0));
    }

    #[test]
    fn bias_only_logits() {
        let mut m = ToyModelParams::zeros(HeadKind::Deterministic, 3, 0, 0.0, 0.0, spec()).unwrap();
        let b = m.blocks()[0].b;
        m.weights[b..b + 3].copy_from_slice(&[2.0, 1.0, 0.0]);
        let (p, y) = m.predict_deterministic(shape(), &[0.3; 18]).unwrap();
        assert_eq!(y[0], 0);
        let z = 1.0 + (-1f64).exp() + (-2f64).exp();
        assert!((p.row(0)[0] - 1.0 / z).abs() < 1e-15);
    }

    #[test]
    fn permuting_class_rows_permutes_outputs() {
        let m = ToyModelParams::init(HeadKind::Deterministic, 3, 0, 0.0, 0.0, spec(), 9).unwrap();
        let f = m.feature_len();
        let mut swapped = m.clone();
        // swap classes 0 and 2: weight rows and biases
        for j in 0..f {
            swapped.weights.swap(j, 2 * f + j);
        }
        let b = m.blocks()[0].b;
        swapped.weights.swap(b, b + 2);
        let img: Vec<f32> = (0..18).map(|v| (v as f32).sin()).collect();
        let (p, _) = m.predict_deterministic(shape(), &img).unwrap();
        let (q, _) = swapped.predict_deterministic(shape(), &img).unwrap();
        for i in 0..9 {
            assert!((p.row(i)[0] - q.row(i)[2]).abs() < 1e-15);
            assert!((p.row(i)[1] - q.row(i)[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn head_kind_enforced() {
        let m = ToyModelParams::zeros(HeadKind::Deterministic, 3, 0, 0.0, 0.0, spec()).unwrap();
        assert!(m.forward_gauss(shape(), &[0.0; 18]).is_err());
    }

    #[test]
    fn layout_sizes() {
        let m = ToyModelParams::zeros(HeadKind::Gaussian, 3, 2, 0.05, 0.05, spec()).unwrap();
        // F = 4: (3 + 3 + 6) outputs x 5
        assert_eq!(m.num_weights(), 12 * 5);
    }
}

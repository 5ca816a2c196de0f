//! Browser bindings for three small demos: elliptical corruption masks,
//! sampling from a low-rank Gaussian logit field, and the error-detection
//! precision-recall curve.

use rand::Rng;
use wasm_bindgen::prelude::*;

use uqseg::corrupt::{ellipse_mask, NoiseSpec};
use uqseg::eval::ue_pr_curve;
use uqseg::gauss::{marginal_probs, sample_masks, GaussLogitParams};
use uqseg::metrics::{categorical_variation, normalized_entropy};
use uqseg::rng::stream_rng;

fn js_err(e: uqseg::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Row-major `height x width` mask, 1 where the pixel is corrupted.
#[wasm_bindgen]
pub fn corruption_mask(
    height: usize,
    width: usize,
    r_min: f64,
    r_max: f64,
    seed: u64,
) -> Result<Vec<u8>, JsValue> {
    let spec = NoiseSpec {
        radius_range: [r_min, r_max],
        ..NoiseSpec::default()
    };
    Ok(ellipse_mask(height, width, &spec, seed)
        .map_err(js_err)?
        .to_u8())
}

/// A three-class logit field over a small image. The left third favours
/// class 0, the right third class 1, and the middle band splits evenly
/// between classes 0 and 2; smooth low-rank factors tie neighbouring pixels
/// together so samples flip whole regions at once.
#[wasm_bindgen]
pub struct SsnDemo {
    width: usize,
    gauss: GaussLogitParams,
}

const CLASSES: usize = 3;

#[wasm_bindgen]
impl SsnDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(
        height: usize,
        width: usize,
        rank: usize,
        scale_p: f64,
        scale_d: f64,
    ) -> Result<SsnDemo, JsValue> {
        let s = height * width;
        let mut mu = vec![0.0; s * CLASSES];
        let mut p = vec![0.0; s * CLASSES * rank];
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                let t = (x as f64 + 0.5) / width as f64;
                let row = &mut mu[i * CLASSES..(i + 1) * CLASSES];
                if t < 1.0 / 3.0 {
                    row[0] = 3.0;
                } else if t > 2.0 / 3.0 {
                    row[1] = 3.0;
                } else {
                    row[0] = 1.5;
                    row[2] = 1.5;
                }
                let v = (y as f64 + 0.5) / height as f64;
                for r in 0..rank {
                    let wave = (std::f64::consts::PI * (r as f64 + 1.0) * (t + 0.7 * v)).cos();
                    // Push classes 0 and 2 in opposite directions.
                    p[(i * CLASSES) * rank + r] = scale_p * wave;
                    p[(i * CLASSES + 2) * rank + r] = -scale_p * wave;
                }
            }
        }
        let d = vec![scale_d.max(1e-12); s * CLASSES];
        let gauss = GaussLogitParams::new(s, CLASSES, rank, mu, p, d).map_err(js_err)?;
        Ok(SsnDemo { width, gauss })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// One sampled segmentation, drawn from `seed`.
    pub fn sample(&self, seed: u64) -> Result<Vec<i32>, JsValue> {
        let mut masks = sample_masks(&self.gauss, 1, seed).map_err(js_err)?;
        Ok(masks.pop().unwrap_or_default())
    }

    /// Normalised entropy of the `m`-sample marginals.
    pub fn entropy(&self, m: usize, seed: u64) -> Result<Vec<f64>, JsValue> {
        let probs = marginal_probs(&self.gauss, m, seed).map_err(js_err)?;
        Ok(normalized_entropy(&probs).map_err(js_err)?.values)
    }

    /// Disagreement between `m` sampled segmentations.
    pub fn variation(&self, m: usize, seed: u64) -> Result<Vec<f64>, JsValue> {
        let masks = sample_masks(&self.gauss, m, seed).map_err(js_err)?;
        Ok(categorical_variation(&masks, CLASSES)
            .map_err(js_err)?
            .values)
    }
}

/// Error-detection curve for a simulated model with `error_rate` mistakes
/// whose uncertainty mixes an oracle (weight `quality`) with uniform noise.
/// Returns `[recall0, precision0, recall1, precision1, ...]`.
#[wasm_bindgen]
pub fn error_detection_curve(
    pixels: usize,
    error_rate: f64,
    quality: f64,
    seed: u64,
) -> Result<Vec<f64>, JsValue> {
    let mut rng = stream_rng(seed, 0);
    let gt = vec![0i32; pixels];
    let mut pred = vec![0i32; pixels];
    let mut u = vec![0.0; pixels];
    for i in 0..pixels {
        let wrong = rng.gen_bool(error_rate.clamp(0.0, 1.0));
        pred[i] = wrong as i32;
        let oracle = if wrong { 1.0 } else { 0.0 };
        u[i] = quality * oracle + (1.0 - quality) * rng.gen::<f64>();
    }
    let curve = ue_pr_curve(&u, &pred, &gt, 2, Some(200)).map_err(js_err)?;
    Ok(curve
        .points
        .iter()
        .flat_map(|p| [p.recall, p.precision])
        .collect())
}

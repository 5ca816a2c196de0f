//! Per-pixel features: the `T*C` raw values divided by the training-set
//! channel std, followed by their 3x3 box means (in-bounds neighbours only).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageShape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub timesteps: usize,
    pub channels: usize,
    pub channel_std: Vec<f64>,
}

impl FeatureSpec {
    pub fn len(&self) -> usize {
        2 * self.timesteps * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, shape: ImageShape, image: &[f32]) -> Result<()> {
        if shape.timesteps != self.timesteps || shape.channels != self.channels {
            return Err(Error::Shape(format!(
                "model expects T={} C={}, image has T={} C={}",
                self.timesteps, self.channels, shape.timesteps, shape.channels
            )));
        }
        if image.len() != shape.len() {
            return Err(Error::Shape(format!(
                "image has {} values, shape implies {}",
                image.len(),
                shape.len()
            )));
        }
        Ok(())
    }
}

/// Row-major `[pixels, F]` feature matrix of one `[T, C, H, W]` image.
pub fn extract(spec: &FeatureSpec, shape: ImageShape, image: &[f32]) -> Result<Vec<f64>> {
    spec.check(shape, image)?;
    let (h, w) = (shape.height, shape.width);
    let s = h * w;
    let planes = spec.timesteps * spec.channels;
    let f = 2 * planes;
    let mut out = vec![0.0; s * f];
    let mut norm = vec![0.0; s];
    for plane in 0..planes {
        let inv = 1.0 / spec.channel_std[plane % spec.channels];
        for (n, &v) in norm.iter_mut().zip(&image[plane * s..(plane + 1) * s]) {
            *n = v as f64 * inv;
        }
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let mut sum = 0.0;
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        sum += norm[yy * w + xx];
                    }
                }
                let count = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
                let i = y * w + x;
                out[i * f + plane] = norm[i];
                out[i * f + planes + plane] = sum / count;
            }
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("image produces non-finite features".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_features() {
        let spec = FeatureSpec {
            timesteps: 1,
            channels: 2,
            channel_std: vec![2.0, 4.0],
        };
        let shape = ImageShape {
            timesteps: 1,
            channels: 2,
            height: 3,
            width: 3,
        };
        let mut img = vec![1.0f32; 9];
        img.extend(vec![8.0f32; 9]);
        let f = extract(&spec, shape, &img).unwrap();
        assert_eq!(f.len(), 9 * 4);
        for row in f.chunks(4) {
            assert_eq!(row, &[0.5, 2.0, 0.5, 2.0]);
        }
    }

    #[test]
    fn box_mean_at_corner() {
        let spec = FeatureSpec {
            timesteps: 1,
            channels: 1,
            channel_std: vec![1.0],
        };
        let shape = ImageShape {
            timesteps: 1,
            channels: 1,
            height: 3,
            width: 3,
        };
        let img: Vec<f32> = (0..9).map(|v| v as f32).collect();
        let f = extract(&spec, shape, &img).unwrap();
        // corner (0,0) averages pixels 0,1,3,4
        assert_eq!(f[1], 2.0);
        // centre averages all nine
        assert_eq!(f[4 * 2 + 1], 4.0);
    }

    #[test]
    fn non_finite_input_rejected() {
        let spec = FeatureSpec {
            timesteps: 1,
            channels: 1,
            channel_std: vec![1.0],
        };
        let shape = ImageShape {
            timesteps: 1,
            channels: 1,
            height: 2,
            width: 2,
        };
        assert!(matches!(
            extract(&spec, shape, &[0.0, f32::NAN, 0.0, 0.0]),
            Err(Error::Input(_))
        ));
    }
}

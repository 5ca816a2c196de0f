//! Structured input corruption: whole object instances or random ellipses
//! receive additive Gaussian noise scaled by the training-set channel std.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::SplitData;
use crate::error::{Error, Result};
use crate::par::map_range;
use crate::rng::{mix_seed, stream_rng};
use crate::tensor::ImageShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Object,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub level: f64,
    pub selection_prob: f64,
    pub min_instance_pixels: usize,
    pub ellipse_count_choices: Vec<usize>,
    pub radius_range: [f64; 2],
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            mode: NoiseMode::Ellipse,
            level: 0.5,
            selection_prob: 0.2,
            min_instance_pixels: 50,
            ellipse_count_choices: vec![1, 2],
            radius_range: [20.0, 45.0],
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0) || !self.level.is_finite() {
            return Err(Error::Config(format!(
                "noise level {} must be >= 0",
                self.level
            )));
        }
        if !(0.0..=1.0).contains(&self.selection_prob) {
            return Err(Error::Config(format!(
                "selection_prob {} outside [0, 1]",
                self.selection_prob
            )));
        }
        let [lo, hi] = self.radius_range;
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::Config(format!("bad radius range [{lo}, {hi}]")));
        }
        if self.ellipse_count_choices.is_empty() {
            return Err(Error::Config("ellipse_count_choices is empty".into()));
        }
        Ok(())
    }
}

/// Per-pixel corruption flags of one `H x W` image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseMask {
    pub height: usize,
    pub width: usize,
    pub flags: Vec<bool>,
}

impl NoiseMask {
    pub fn empty(height: usize, width: usize) -> Self {
        NoiseMask {
            height,
            width,
            flags: vec![false; height * width],
        }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.flags.len() as f64
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.flags.iter().map(|&f| f as u8).collect()
    }
}

const SELECT_STREAM: u64 = 1;
const ELLIPSE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// Union of independently selected instances. Instances smaller than
/// `min_instance_pixels` or carrying the void label are never selected.
pub fn object_mask(
    instances: &[i32],
    labels: &[i32],
    height: usize,
    width: usize,
    void_label: i32,
    spec: &NoiseSpec,
    seed: u64,
) -> Result<NoiseMask> {
    spec.validate()?;
    if instances.len() != height * width || labels.len() != instances.len() {
        return Err(Error::Input(format!(
            "instance/label maps of {}/{} pixels for a {height}x{width} image",
            instances.len(),
            labels.len()
        )));
    }
    if let Some(v) = instances.iter().find(|&&v| v < 0) {
        return Err(Error::Input(format!("negative instance id {v}")));
    }
    // BTreeMap: draws happen in ascending instance id order
    let mut stats: BTreeMap<i32, (usize, bool)> = BTreeMap::new();
    for (&inst, &lab) in instances.iter().zip(labels) {
        let e = stats.entry(inst).or_insert((0, false));
        e.0 += 1;
        e.1 |= lab == void_label;
    }
    let mut rng = stream_rng(seed, SELECT_STREAM);
    let selected: BTreeMap<i32, bool> = stats
        .into_iter()
        .map(|(inst, (count, has_void))| {
            let draw: f64 = rng.gen();
            let eligible = count >= spec.min_instance_pixels && !has_void;
            (inst, eligible && draw < spec.selection_prob)
        })
        .collect();
    Ok(NoiseMask {
        height,
        width,
        flags: instances.iter().map(|i| selected[i]).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
}

/// Axis-aligned ellipses rasterised at pixel centres, clipped to the image.
pub fn rasterize_ellipses(height: usize, width: usize, ellipses: &[Ellipse]) -> NoiseMask {
    let mut mask = NoiseMask::empty(height, width);
    for e in ellipses {
        for y in 0..height {
            let dy = (y as f64 + 0.5 - e.cy) / e.b;
            if dy.abs() > 1.0 {
                continue;
            }
            for x in 0..width {
                let dx = (x as f64 + 0.5 - e.cx) / e.a;
                if dx * dx + dy * dy <= 1.0 {
                    mask.flags[y * width + x] = true;
                }
            }
        }
    }
    mask
}

pub fn sample_ellipses(height: usize, width: usize, spec: &NoiseSpec, seed: u64) -> Vec<Ellipse> {
    let mut rng = stream_rng(seed, ELLIPSE_STREAM);
    let choices = &spec.ellipse_count_choices;
    let count = choices[rng.gen_range(0..choices.len())];
    let [lo, hi] = spec.radius_range;
    let radius = |rng: &mut crate::rng::Rng| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    (0..count)
        .map(|_| {
            let cx = rng.gen_range(0.0..width as f64);
            let cy = rng.gen_range(0.0..height as f64);
            let a = radius(&mut rng);
            let b = radius(&mut rng);
            Ellipse { cx, cy, a, b }
        })
        .collect()
}

pub fn ellipse_mask(height: usize, width: usize, spec: &NoiseSpec, seed: u64) -> Result<NoiseMask> {
    spec.validate()?;
    Ok(rasterize_ellipses(
        height,
        width,
        &sample_ellipses(height, width, spec, seed),
    ))
}

/// Adds `N(0, (level * std_c)^2)` independently to every timestep and channel
/// of every flagged pixel of a raw `[T, C, H, W]` image.
pub fn apply_noise(
    image: &[f32],
    shape: ImageShape,
    mask: &NoiseMask,
    channel_std: &[f64],
    level: f64,
    seed: u64,
) -> Result<Vec<f32>> {
    if channel_std.len() != shape.channels {
        return Err(Error::Manifest(format!(
            "{} channel stds for {} channels",
            channel_std.len(),
            shape.channels
        )));
    }
    if let Some(s) = channel_std.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::Manifest(format!("channel std {s} is not positive")));
    }
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::Config(format!("noise level {level} must be >= 0")));
    }
    if image.len() != shape.len() || mask.flags.len() != shape.pixels() {
        return Err(Error::Shape("image, mask and shape disagree".into()));
    }
    let mut out = image.to_vec();
    if level == 0.0 {
        return Ok(out);
    }
    let s = shape.pixels();
    let mut rng = stream_rng(seed, NOISE_STREAM);
    for t in 0..shape.timesteps {
        for c in 0..shape.channels {
            let sd = level * channel_std[c];
            let plane = &mut out[(t * shape.channels + c) * s..(t * shape.channels + c + 1) * s];
            for (v, &flag) in plane.iter_mut().zip(&mask.flags) {
                if flag {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    *v = (*v as f64 + sd * n) as f32;
                }
            }
        }
    }
    Ok(out)
}

/// Per-image seed for image `index` of a corruption run.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    mix_seed(seed, index as u64)
}

/// Corrupts every image of a split, storing the masks in `noise`.
pub fn corrupt_split(
    split: &SplitData,
    channel_std: &[f64],
    void_label: i32,
    spec: &NoiseSpec,
) -> Result<SplitData> {
    spec.validate()?;
    let shape = split.shape;
    let (h, w) = (shape.height, shape.width);
    let results = map_range(split.len(), |i| -> Result<(Vec<f32>, NoiseMask)> {
        let seed = image_seed(spec.seed, i);
        let mask = match spec.mode {
            NoiseMode::Object => object_mask(
                split.instances_of(i),
                split.labels_of(i),
                h,
                w,
                void_label,
                spec,
                seed,
            )?,
            NoiseMode::Ellipse => ellipse_mask(h, w, spec, seed)?,
        };
        let img = apply_noise(split.image(i), shape, &mask, channel_std, spec.level, seed)?;
        Ok((img, mask))
    });
    let mut out = split.clone();
    let mut noise = Vec::with_capacity(split.labels.len());
    out.images.clear();
    for r in results {
        let (img, mask) = r?;
        out.images.extend_from_slice(&img);
        noise.extend(mask.to_u8());
    }
    out.noise = Some(noise);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_selection_probability_selects_nothing() {
        let inst = vec![0; 100];
        let lab = vec![1; 100];
        let spec = NoiseSpec {
            mode: NoiseMode::Object,
            selection_prob: 0.0,
            ..Default::default()
        };
        let m = object_mask(&inst, &lab, 10, 10, 3, &spec, 1).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn certain_selection_flags_whole_instance() {
        let mut inst = vec![0; 100];
        inst.extend(vec![1; 20]);
        let mut lab = vec![1; 100];
        lab.extend(vec![2; 20]);
        let spec = NoiseSpec {
            mode: NoiseMode::Object,
            selection_prob: 1.0,
            ..Default::default()
        };
        let m = object_mask(&inst, &lab, 12, 10, 3, &spec, 1).unwrap();
        // the 20-pixel instance is below the size threshold
        assert_eq!(m.count(), 100);
        assert!(m.flags[..100].iter().all(|&f| f));
    }

    #[test]
    fn void_instances_never_selected() {
        let inst = vec![0; 64];
        let lab = vec![3; 64];
        let spec = NoiseSpec {
            mode: NoiseMode::Object,
            selection_prob: 1.0,
            min_instance_pixels: 1,
            ..Default::default()
        };
        let m = object_mask(&inst, &lab, 8, 8, 3, &spec, 1).unwrap();
        assert_eq!(m.count(), 0);
        assert!(object_mask(&inst[..10], &lab, 8, 8, 3, &spec, 1).is_err());
    }

    #[test]
    fn centred_circle_of_radius_20() {
        let e = Ellipse {
            cx: 64.0,
            cy: 64.0,
            a: 20.0,
            b: 20.0,
        };
        let m = rasterize_ellipses(128, 128, &[e]);
        // independent count over integer offsets from the centre
        let mut expected = 0;
        for i in -64i32..64 {
            for j in -64i32..64 {
                let (dx, dy) = (i as f64 + 0.5, j as f64 + 0.5);
                if dx * dx + dy * dy <= 400.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(m.count(), expected);
        assert_eq!(m.count(), 1264);
        // 10x supersampled area sits within one boundary ring of the count
        let mut inside = 0usize;
        for i in 0..1280 {
            for j in 0..1280 {
                let (x, y) = ((i as f64 + 0.5) / 10.0, (j as f64 + 0.5) / 10.0);
                if (x - 64.0).powi(2) + (y - 64.0).powi(2) <= 400.0 {
                    inside += 1;
                }
            }
        }
        let area = inside as f64 / 100.0;
        assert!((area - 1257.0).abs() < 2.0, "{area}");
        assert!((m.count() as f64 - area).abs() < 2.0 * std::f64::consts::PI * 20.0 * 0.5);
    }

    #[test]
    fn corner_ellipse_is_clipped() {
        let full = rasterize_ellipses(
            128,
            128,
            &[Ellipse {
                cx: 64.0,
                cy: 64.0,
                a: 30.0,
                b: 20.0,
            }],
        );
        let corner = rasterize_ellipses(
            128,
            128,
            &[Ellipse {
                cx: 0.0,
                cy: 0.0,
                a: 30.0,
                b: 20.0,
            }],
        );
        assert!(corner.count() < full.count());
        let quarter = full.count() as f64 / 4.0;
        assert!((corner.count() as f64 - quarter).abs() < 0.1 * quarter);
    }

    #[test]
    fn ellipse_masks_are_reproducible() {
        let spec = NoiseSpec::default();
        assert_eq!(
            ellipse_mask(64, 64, &spec, 11).unwrap(),
            ellipse_mask(64, 64, &spec, 11).unwrap()
        );
    }

    #[test]
    fn apply_noise_identities() {
        let shape = ImageShape {
            timesteps: 2,
            channels: 2,
            height: 4,
            width: 4,
        };
        let img: Vec<f32> = (0..shape.len()).map(|v| v as f32 * 0.25).collect();
        let mut mask = NoiseMask::empty(4, 4);
        let std = [1.0, 2.0];
        assert_eq!(apply_noise(&img, shape, &mask, &std, 1.0, 0).unwrap(), img);
        mask.flags[5] = true;
        assert_eq!(apply_noise(&img, shape, &mask, &std, 0.0, 0).unwrap(), img);
        let noisy = apply_noise(&img, shape, &mask, &std, 1.0, 0).unwrap();
        for (p, (a, b)) in img.iter().zip(&noisy).enumerate() {
            if p % 16 == 5 {
                assert_ne!(a, b);
            } else {
                assert_eq!(a, b);
            }
        }
        assert!(matches!(
            apply_noise(&img, shape, &mask, &[1.0, 0.0], 1.0, 0),
            Err(Error::Manifest(_))
        ));
    }

    #[test]
    fn invalid_noise_settings_rejected() {
        let s = NoiseSpec { level: -1.0, ..Default::default() };
        assert!(s.validate().is_err());
        let s = NoiseSpec { radius_range: [30.0, 20.0], ..Default::default() };
        assert!(s.validate().is_err());
        let s = NoiseSpec { selection_prob: 1.5, ..Default::default() };
        assert!(s.validate().is_err());
    }
}

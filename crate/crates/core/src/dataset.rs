//! In-memory dataset splits and their on-disk layout.
//!
//! A dataset directory holds `manifest.json` plus one sub-directory per split
//! with `images.uqt` (`[n, T, C, H, W]` f32), `labels.uqt` and
//! `instances.uqt` (`[n, H, W]` i32), and for corrupted data `noise.uqt`
//! (`[n, H, W]` u8, 1 = corrupted).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{read_tensor, write_json, write_tensor, DatasetManifest, ImageShape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub shape: ImageShape,
    pub images: Vec<f32>,
    pub labels: Vec<i32>,
    pub instances: Vec<i32>,
    pub noise: Option<Vec<u8>>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.labels.len() / self.shape.pixels()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.shape.len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn labels_of(&self, i: usize) -> &[i32] {
        let s = self.shape.pixels();
        &self.labels[i * s..(i + 1) * s]
    }

    pub fn instances_of(&self, i: usize) -> &[i32] {
        let s = self.shape.pixels();
        &self.instances[i * s..(i + 1) * s]
    }

    pub fn noise_of(&self, i: usize) -> Option<&[u8]> {
        let s = self.shape.pixels();
        self.noise.as_ref().map(|n| &n[i * s..(i + 1) * s])
    }

    /// Keeps the first `n` images.
    pub fn truncate(&mut self, n: usize) {
        let n = n.min(self.len());
        self.images.truncate(n * self.shape.len());
        self.labels.truncate(n * self.shape.pixels());
        self.instances.truncate(n * self.shape.pixels());
        if let Some(noise) = &mut self.noise {
            noise.truncate(n * self.shape.pixels());
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ImageShape {
            timesteps: t,
            channels: c,
            height: h,
            width: w,
        } = self.shape;
        let n = self.len();
        write_tensor(
            dir.join("images.uqt"),
            &Tensor::from_f32(vec![n, t, c, h, w], self.images.clone())?,
        )?;
        write_tensor(
            dir.join("labels.uqt"),
            &Tensor::from_i32(vec![n, h, w], self.labels.clone())?,
        )?;
        write_tensor(
            dir.join("instances.uqt"),
            &Tensor::from_i32(vec![n, h, w], self.instances.clone())?,
        )?;
        if let Some(noise) = &self.noise {
            write_tensor(
                dir.join("noise.uqt"),
                &Tensor::from_u8(vec![n, h, w], noise.clone())?,
            )?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, shape: ImageShape) -> Result<Self> {
        let dir = dir.as_ref();
        let images = read_tensor(dir.join("images.uqt"))?;
        let n = images.dims()[0];
        let (h, w) = (shape.height, shape.width);
        images.expect_dims(&[n, shape.timesteps, shape.channels, h, w], "images")?;
        let labels = read_tensor(dir.join("labels.uqt"))?;
        labels.expect_dims(&[n, h, w], "labels")?;
        let instances = read_tensor(dir.join("instances.uqt"))?;
        instances.expect_dims(&[n, h, w], "instances")?;
        let noise_path = dir.join("noise.uqt");
        let noise = if noise_path.exists() {
            let t = read_tensor(&noise_path)?;
            t.expect_dims(&[n, h, w], "noise")?;
            Some(t.as_u8()?.to_vec())
        } else {
            None
        };
        Ok(SplitData {
            shape,
            images: images.as_f32()?.to_vec(),
            labels: labels.as_i32()?.to_vec(),
            instances: instances.as_i32()?.to_vec(),
            noise,
        })
    }
}

/// File list recorded in the manifest for a split directory.
pub fn split_files(split: SplitName, with_noise: bool) -> Vec<String> {
    let s = split.as_str();
    let mut files = vec![
        format!("{s}/images.uqt"),
        format!("{s}/labels.uqt"),
        format!("{s}/instances.uqt"),
    ];
    if with_noise {
        files.push(format!("{s}/noise.uqt"));
    }
    files
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: SplitData,
    pub val: Option<SplitData>,
    pub test: Option<SplitData>,
}

impl Dataset {
    pub fn split(&self, name: SplitName) -> Option<&SplitData> {
        match name {
            SplitName::Train => Some(&self.train),
            SplitName::Val => self.val.as_ref(),
            SplitName::Test => self.test.as_ref(),
        }
    }

    /// Writes the manifest and every split into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = self.manifest.clone();
        manifest.splits.train = split_files(SplitName::Train, self.train.noise.is_some());
        self.train.save(dir.join("train"))?;
        manifest.splits.val = match &self.val {
            Some(s) => {
                s.save(dir.join("val"))?;
                split_files(SplitName::Val, s.noise.is_some())
            }
            None => Vec::new(),
        };
        manifest.splits.test = match &self.test {
            Some(s) => {
                s.save(dir.join("test"))?;
                split_files(SplitName::Test, s.noise.is_some())
            }
            None => Vec::new(),
        };
        write_json(dir.join("manifest.json"), &manifest)
    }
}

/// Loads one split of a dataset directory.
pub fn load_split(dir: impl AsRef<Path>, split: SplitName) -> Result<(DatasetManifest, SplitData)> {
    let dir = dir.as_ref();
    let manifest = DatasetManifest::load(dir.join("manifest.json"))?;
    let listed = match split {
        SplitName::Train => &manifest.splits.train,
        SplitName::Val => &manifest.splits.val,
        SplitName::Test => &manifest.splits.test,
    };
    if listed.is_empty() {
        return Err(Error::Input(format!(
            "dataset {} has no {} split",
            dir.display(),
            split.as_str()
        )));
    }
    let data = SplitData::load(dir.join(split.as_str()), manifest.image_shape)?;
    Ok((manifest, data))
}

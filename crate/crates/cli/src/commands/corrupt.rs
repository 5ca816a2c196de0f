use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use uqseg::corrupt::{corrupt_split, NoiseMode, NoiseSpec};
use uqseg::dataset::SplitName;

use super::load_dataset;
use crate::run::{load_config, set, CliResult, Failure, RunDir};

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source dataset directory
    #[arg(long)]
    data: Option<PathBuf>,
    /// Split to corrupt: train, val or test
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `ellipse` or `object`
    #[arg(long)]
    mode: Option<String>,
    /// Noise std as a multiple of the training per-channel std
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    selection_prob: Option<f64>,
    #[arg(long)]
    min_instance_pixels: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptConfig {
    pub data: Option<PathBuf>,
    pub split: String,
    pub out: PathBuf,
    pub noise: NoiseSpec,
}

impl Default for CorruptConfig {
    fn default() -> Self {
        CorruptConfig {
            data: None,
            split: "test".into(),
            out: "corrupted".into(),
            noise: NoiseSpec::default(),
        }
    }
}

#[derive(Serialize)]
struct CorruptReport {
    split: String,
    images: usize,
    corrupted_fraction: f64,
    per_image_fraction: Vec<f64>,
}

pub fn run(args: CorruptArgs) -> CliResult<()> {
    let mut cfg: CorruptConfig = load_config(args.config.as_deref())?;
    set(&mut cfg.data, args.data.map(Some));
    set(&mut cfg.split, args.split);
    set(&mut cfg.out, args.out);
    if let Some(m) = args.mode {
        cfg.noise.mode = match m.as_str() {
            "ellipse" => NoiseMode::Ellipse,
            "object" => NoiseMode::Object,
            other => return Err(Failure::usage(format!("unknown noise mode {other:?}"))),
        };
    }
    set(&mut cfg.noise.level, args.level);
    set(&mut cfg.noise.selection_prob, args.selection_prob);
    set(&mut cfg.noise.min_instance_pixels, args.min_instance_pixels);
    set(&mut cfg.noise.seed, args.seed);
    cfg.noise.validate()?;
    let split = SplitName::parse(&cfg.split)?;
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| Failure::usage("--data is required"))?;

    let mut ds = load_dataset(&data)?;
    let source = ds
        .split(split)
        .ok_or_else(|| Failure::missing(format!("dataset has no {} split", cfg.split)))?;
    let corrupted = corrupt_split(
        source,
        &ds.manifest.channel_std,
        ds.manifest.void_label(),
        &cfg.noise,
    )?;
    let pixels = corrupted.shape.pixels();
    let flags = corrupted.noise.as_deref().unwrap_or_default();
    let per_image: Vec<f64> = flags
        .chunks(pixels)
        .map(|c| c.iter().filter(|&&f| f != 0).count() as f64 / pixels as f64)
        .collect();
    let report = CorruptReport {
        split: cfg.split.clone(),
        images: corrupted.len(),
        corrupted_fraction: flags.iter().filter(|&&f| f != 0).count() as f64
            / flags.len().max(1) as f64,
        per_image_fraction: per_image,
    };
    match split {
        SplitName::Train => ds.train = corrupted,
        SplitName::Val => ds.val = Some(corrupted),
        SplitName::Test => ds.test = Some(corrupted),
    }

    let dir = RunDir::create(&cfg.out)?;
    ds.save(&dir.path)?;
    dir.write_config("corrupt", &cfg)?;
    dir.write_report("corrupt", &report)?;
    println!("{}", dir.path.display());
    Ok(())
}

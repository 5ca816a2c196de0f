use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use uqseg::synth::{generate_dataset, SplitSizes, SynthConfig};

use super::parse_pairs;
use crate::run::{load_config, set, CliResult, Failure, RunDir};

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON file with a `synth` object and `sizes`
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    timesteps: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    cells: Option<usize>,
    /// Class pairs sharing a signal, e.g. `0:1,2:3`
    #[arg(long, value_parser = parse_pairs)]
    ambiguous: Option<Vec<(usize, usize)>>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub out: PathBuf,
    pub synth: SynthConfig,
    pub sizes: SplitSizes,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            out: "data".into(),
            synth: SynthConfig::default(),
            sizes: SplitSizes {
                train: 100,
                val: 0,
                test: 50,
            },
        }
    }
}

#[derive(Serialize)]
struct GenReport {
    name: String,
    classes: usize,
    train: usize,
    val: usize,
    test: usize,
    channel_std: Vec<f64>,
    class_fractions: Vec<f64>,
}

pub fn run(args: GenArgs) -> CliResult<()> {
    let mut cfg: GenConfig = load_config(args.config.as_deref())?;
    set(&mut cfg.out, args.out);
    let s = &mut cfg.synth;
    set(&mut s.name, args.name);
    set(&mut s.classes, args.classes);
    set(&mut s.height, args.height);
    set(&mut s.width, args.width);
    set(&mut s.timesteps, args.timesteps);
    set(&mut s.channels, args.channels);
    set(&mut s.cells_per_image, args.cells);
    set(&mut s.ambiguous_pairs, args.ambiguous);
    set(&mut s.noise_std, args.noise_std);
    set(&mut s.amplitude, args.amplitude);
    set(&mut s.seed, args.seed);
    set(&mut cfg.sizes.train, args.train);
    set(&mut cfg.sizes.val, args.val);
    set(&mut cfg.sizes.test, args.test);
    cfg.synth.validate()?;
    if cfg.sizes.train == 0 {
        return Err(Failure::usage("--train must be at least 1"));
    }

    let ds = generate_dataset(&cfg.synth, cfg.sizes)?;
    let dir = RunDir::create(&cfg.out)?;
    ds.save(&dir.path)?;
    dir.write_config("gen", &cfg)?;

    let k = cfg.synth.classes;
    let mut counts = vec![0usize; k];
    for &y in &ds.train.labels {
        if y >= 0 && (y as usize) < k {
            counts[y as usize] += 1;
        }
    }
    let total = counts.iter().sum::<usize>().max(1) as f64;
    dir.write_report(
        "gen",
        &GenReport {
            name: cfg.synth.name.clone(),
            classes: k,
            train: cfg.sizes.train,
            val: cfg.sizes.val,
            test: cfg.sizes.test,
            channel_std: ds.manifest.channel_std.clone(),
            class_fractions: counts.iter().map(|&c| c as f64 / total).collect(),
        },
    )?;
    println!("{}", dir.path.display());
    Ok(())
}

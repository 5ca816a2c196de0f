//! End-to-end studies on synthetic data: ensembles versus single models
//! versus the Gaussian head on ambiguous classes, noise detection across
//! train/test corruption levels, and image-level uncertainty correlation.
//!
//! Every study is a pure function of its config; reports serialise to the
//! same bytes regardless of the worker thread count.

use serde::{Deserialize, Serialize};

use crate::corrupt::{corrupt_split, NoiseSpec};
use crate::dataset::{Dataset, SplitData};
use crate::ensemble::{combine_mixture, combine_product};
use crate::error::{Error, Result};
use crate::eval::{
    image_summary, noise_pr_curve, per_pixel_nll, precision_at_recall, rejection_point, seg_scores,
    ImageReport, RejectPoint,
};
use crate::metrics::{maxprob_uncertainty, normalized_entropy};
use crate::model::{train, HeadKind, ToyModelParams, TrainConfig, TrainingLog};
use crate::par::{map_range, pairwise_sum};
use crate::rng::mix_seed;
use crate::synth::{generate_dataset, SplitSizes, SynthConfig};
use crate::tensor::DatasetManifest;

fn test_split(ds: &Dataset) -> Result<&SplitData> {
    ds.test
        .as_ref()
        .ok_or_else(|| Error::Config("study needs a non-empty test split".into()))
}

fn mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

fn final_loss(log: &TrainingLog) -> Option<f64> {
    log.epochs.last().map(|e| e.loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmbiguityStudyConfig {
    pub synth: SynthConfig,
    pub sizes: SplitSizes,
    pub members: usize,
    pub deterministic: TrainConfig,
    pub gaussian: TrainConfig,
    pub reject_fraction: f64,
}

impl Default for AmbiguityStudyConfig {
    fn default() -> Self {
        AmbiguityStudyConfig {
            synth: SynthConfig {
                ambiguous_pairs: vec![(0, 1)],
                noise_std: 2.0,
                ..SynthConfig::default()
            },
            sizes: SplitSizes {
                train: 500,
                val: 0,
                test: 200,
            },
            members: 5,
            deterministic: TrainConfig {
                lr: 1e-2,
                epochs: 4,
                ..TrainConfig::default()
            },
            gaussian: TrainConfig {
                head: HeadKind::Gaussian,
                lr: 1e-2,
                epochs: 3,
                batch_size: 4,
                ..TrainConfig::default()
            },
            reject_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityRun {
    pub seed: u64,
    pub member_miou: Vec<f64>,
    pub member_mean_miou: f64,
    pub product_miou: f64,
    pub mixture_miou: f64,
    pub gaussian_miou: f64,
    /// Average per-pixel held-out log-likelihood of member 0 as a point mass.
    pub deterministic_loglik: f64,
    pub gaussian_loglik: f64,
    /// Member 0 with maxprob uncertainty, nothing rejected.
    pub reject_none: RejectPoint,
    pub reject_cut: RejectPoint,
    pub member_final_loss: Vec<Option<f64>>,
    pub gaussian_final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub config: AmbiguityStudyConfig,
    pub runs: Vec<AmbiguityRun>,
}

/// Per-image outputs gathered in one pass over the test split.
struct AmbiguityImage {
    member_pred: Vec<Vec<i32>>,
    product_pred: Vec<i32>,
    mixture_pred: Vec<i32>,
    gaussian_pred: Vec<i32>,
    maxprob: Vec<f64>,
    det_ll: f64,
    gauss_ll: f64,
}

/// Trains `members` deterministic models and one Gaussian-head model on a
/// dataset generated from `seed`, then scores them on the test split.
pub fn ambiguity_run(cfg: &AmbiguityStudyConfig, seed: u64) -> Result<AmbiguityRun> {
    if cfg.members == 0 {
        return Err(Error::Config("ensemble needs at least one member".into()));
    }
    let synth = SynthConfig {
        seed,
        ..cfg.synth.clone()
    };
    let ds = generate_dataset(&synth, cfg.sizes)?;
    let test = test_split(&ds)?;
    let shape = ds.manifest.image_shape;
    let k = ds.manifest.num_classes;

    let mut members = Vec::with_capacity(cfg.members);
    let mut member_logs = Vec::with_capacity(cfg.members);
    for e in 0..cfg.members {
        let tc = TrainConfig {
            head: HeadKind::Deterministic,
            seed: mix_seed(seed, 100 + e as u64),
            ..cfg.deterministic.clone()
        };
        let (p, log) = train(&ds.manifest, &ds.train, &tc)?;
        members.push(p);
        member_logs.push(log);
    }
    let gtc = TrainConfig {
        head: HeadKind::Gaussian,
        seed: mix_seed(seed, 200),
        ..cfg.gaussian.clone()
    };
    let (gauss, gauss_log) = train(&ds.manifest, &ds.train, &gtc)?;
    let m_pred = gtc.m_pred;

    let per_image = map_range(test.len(), |i| -> Result<AmbiguityImage> {
        let img = test.image(i);
        let labels = test.labels_of(i);
        let mut logits = Vec::with_capacity(members.len());
        let mut probs = Vec::with_capacity(members.len());
        for m in &members {
            let l = m.forward_logits(shape, img)?;
            probs.push(l.softmax());
            logits.push(l);
        }
        let member_pred = probs.iter().map(|p| p.argmax()).collect();
        let product_pred = combine_product(&logits)?.argmax();
        let mixture_pred = combine_mixture(&probs)?.argmax();
        let maxprob = maxprob_uncertainty(&probs[0])?.values;
        let eval_seed = mix_seed(seed, 300 + i as u64);
        let det_ll = -per_pixel_nll(
            &members[0].gauss_or_point_mass(shape, img)?,
            labels,
            1,
            eval_seed,
        )?;
        let g = gauss.forward_gauss(shape, img)?;
        let gauss_ll = -per_pixel_nll(&g, labels, m_pred, eval_seed)?;
        let gaussian_pred = crate::gauss::predict(&g, m_pred, eval_seed)?;
        Ok(AmbiguityImage {
            member_pred,
            product_pred,
            mixture_pred,
            gaussian_pred,
            maxprob,
            det_ll,
            gauss_ll,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let gt = &test.labels;
    let s = shape.pixels();
    let concat = |f: &dyn Fn(&AmbiguityImage) -> &[i32]| -> Vec<i32> {
        per_image
            .iter()
            .flat_map(|x| f(x).iter().copied())
            .collect()
    };
    let miou = |pred: &[i32]| -> Result<f64> { Ok(seg_scores(pred, gt, s, k)?.miou) };
    let member_miou = (0..cfg.members)
        .map(|e| miou(&concat(&|x| &x.member_pred[e])))
        .collect::<Result<Vec<_>>>()?;
    let u: Vec<f64> = per_image
        .iter()
        .flat_map(|x| x.maxprob.iter().copied())
        .collect();
    let pred0 = concat(&|x| &x.member_pred[0]);
    let det_ll: Vec<f64> = per_image.iter().map(|x| x.det_ll).collect();
    let gauss_ll: Vec<f64> = per_image.iter().map(|x| x.gauss_ll).collect();
    Ok(AmbiguityRun {
        seed,
        member_mean_miou: mean(&member_miou),
        member_miou,
        product_miou: miou(&concat(&|x| &x.product_pred))?,
        mixture_miou: miou(&concat(&|x| &x.mixture_pred))?,
        gaussian_miou: miou(&concat(&|x| &x.gaussian_pred))?,
        deterministic_loglik: mean(&det_ll),
        gaussian_loglik: mean(&gauss_ll),
        reject_none: rejection_point(&u, &pred0, gt, k, 0.0)?,
        reject_cut: rejection_point(&u, &pred0, gt, k, cfg.reject_fraction)?,
        member_final_loss: member_logs.iter().map(final_loss).collect(),
        gaussian_final_loss: final_loss(&gauss_log),
    })
}

pub fn ambiguity_study(cfg: &AmbiguityStudyConfig, seeds: &[u64]) -> Result<AmbiguityReport> {
    let runs = seeds
        .iter()
        .map(|&s| ambiguity_run(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(AmbiguityReport {
        config: cfg.clone(),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseStudyConfig {
    pub synth: SynthConfig,
    pub sizes: SplitSizes,
    pub model: TrainConfig,
    /// Mode, ellipse geometry and seed of the corruption; `level` is ignored.
    pub noise: NoiseSpec,
    pub recall: f64,
}

impl Default for NoiseStudyConfig {
    fn default() -> Self {
        NoiseStudyConfig {
            synth: SynthConfig::default(),
            sizes: SplitSizes {
                train: 300,
                val: 0,
                test: 100,
            },
            model: TrainConfig {
                lr: 1e-2,
                epochs: 8,
                ..TrainConfig::default()
            },
            noise: NoiseSpec::default(),
            recall: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRun {
    pub train_level: f64,
    pub eval_level: f64,
    pub precision: f64,
    pub baseline: f64,
    /// `precision - baseline` at the configured recall.
    pub margin: f64,
    pub corrupted_fraction: f64,
    pub final_loss: Option<f64>,
}

fn corrupt_at(
    split: &SplitData,
    manifest: &DatasetManifest,
    spec: &NoiseSpec,
    level: f64,
    stream: u64,
) -> Result<SplitData> {
    let spec = NoiseSpec {
        level,
        seed: mix_seed(spec.seed, stream),
        ..spec.clone()
    };
    corrupt_split(split, &manifest.channel_std, manifest.void_label(), &spec)
}

/// Trains on the training split corrupted at `train_level` and scores
/// entropy as a detector of pixels corrupted at `eval_level` in the test split.
pub fn noise_run(
    ds: &Dataset,
    cfg: &NoiseStudyConfig,
    train_level: f64,
    eval_level: f64,
) -> Result<NoiseRun> {
    let test = test_split(ds)?;
    let m = &ds.manifest;
    let train_split = if train_level > 0.0 {
        corrupt_at(&ds.train, m, &cfg.noise, train_level, 1)?
    } else {
        ds.train.clone()
    };
    let (params, log) = train(m, &train_split, &cfg.model)?;
    let noisy = corrupt_at(test, m, &cfg.noise, eval_level, 2)?;
    let flags: Vec<bool> = noisy
        .noise
        .as_deref()
        .unwrap_or_default()
        .iter()
        .map(|&f| f != 0)
        .collect();
    let (u, pred) = entropy_predictions(&params, &noisy, cfg.model.m_pred, cfg.model.seed)?;
    let curve = noise_pr_curve(&u, &pred, &noisy.labels, &flags, m.num_classes, None)?;
    let baseline = curve.baseline_precision.unwrap_or(0.0);
    let precision = precision_at_recall(&curve, cfg.recall).ok_or_else(|| {
        Error::DegenerateTask(format!("curve never reaches recall {}", cfg.recall))
    })?;
    let corrupted = flags.iter().filter(|&&f| f).count();
    Ok(NoiseRun {
        train_level,
        eval_level,
        precision,
        baseline,
        margin: precision - baseline,
        corrupted_fraction: corrupted as f64 / flags.len() as f64,
        final_loss: final_loss(&log),
    })
}

/// Normalised entropy (marginal entropy for the Gaussian head) and
/// predictions over a whole split.
pub fn entropy_predictions(
    params: &ToyModelParams,
    split: &SplitData,
    m: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<i32>)> {
    let shape = split.shape;
    let parts = map_range(split.len(), |i| -> Result<(Vec<f64>, Vec<i32>)> {
        // for the Gaussian head `probs` are the marginals, so this is the
        // marginal entropy under the same draws as the prediction
        let p = params.predict(shape, split.image(i), m, mix_seed(seed, i as u64))?;
        Ok((normalized_entropy(&p.probs)?.values, p.labels))
    });
    let mut u = Vec::with_capacity(split.labels.len());
    let mut pred = Vec::with_capacity(split.labels.len());
    for part in parts {
        let (a, b) = part?;
        u.extend(a);
        pred.extend(b);
    }
    Ok((u, pred))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub config: NoiseStudyConfig,
    pub runs: Vec<NoiseRun>,
}

/// Runs `noise_run` for each `(train_level, eval_level)` pair on one dataset.
pub fn noise_study(cfg: &NoiseStudyConfig, levels: &[(f64, f64)]) -> Result<NoiseReport> {
    let ds = generate_dataset(&cfg.synth, cfg.sizes)?;
    let runs = levels
        .iter()
        .map(|&(a, b)| noise_run(&ds, cfg, a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseReport {
        config: cfg.clone(),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageStudyConfig {
    pub synth: SynthConfig,
    pub sizes: SplitSizes,
    pub model: TrainConfig,
}

impl Default for ImageStudyConfig {
    fn default() -> Self {
        ImageStudyConfig {
            synth: SynthConfig {
                classes: 6,
                ambiguous_pairs: vec![(0, 1), (0, 2)],
                cells_per_image: 3,
                ..SynthConfig::default()
            },
            sizes: SplitSizes {
                train: 200,
                val: 0,
                test: 200,
            },
            model: TrainConfig {
                head: HeadKind::Gaussian,
                lr: 1e-2,
                epochs: 8,
                batch_size: 4,
                ..TrainConfig::default()
            },
        }
    }
}

/// Per-image mean entropy against per-image mIoU on the test split.
pub fn image_study(cfg: &ImageStudyConfig) -> Result<ImageReport> {
    let ds = generate_dataset(&cfg.synth, cfg.sizes)?;
    let test = test_split(&ds)?;
    let (params, _) = train(&ds.manifest, &ds.train, &cfg.model)?;
    let (u, pred) = entropy_predictions(&params, test, cfg.model.m_pred, cfg.model.seed)?;
    image_summary(
        &u,
        &pred,
        &test.labels,
        test.shape.pixels(),
        ds.manifest.num_classes,
        None,
    )
}

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use uqseg::dataset::{load_split, SplitName};
use uqseg::ensemble::{combine_mixture, combine_product, CombineMode};
use uqseg::eval::per_pixel_nll;
use uqseg::gauss::{sample_masks, write_gauss_params};
use uqseg::metrics::{
    categorical_variation, intermodel_variance, maxprob_uncertainty, normalized_entropy,
    rescale_maps, MetricId, UncertaintyMap,
};
use uqseg::model::{load_model, HeadKind, Prediction, ToyModelParams};
use uqseg::par::map_range;
use uqseg::probs::ProbTensor;
use uqseg::rng::mix_seed;
use uqseg::tensor::{read_json, write_tensor, Tensor};
use uqseg::Error;

use super::train::ModelIndex;
use crate::run::{load_config, require_dir, set, CliResult, Failure, RunDir};

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Directory written by `uqseg train`
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ensemble rule: `product` or `mixture`
    #[arg(long)]
    combine: Option<String>,
    /// Monte-Carlo samples for Gaussian heads (default: the value used at training)
    #[arg(long)]
    m_pred: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write raw logits (single deterministic model)
    #[arg(long)]
    save_logits: bool,
    /// Also write per-image Gaussian parameters (single Gaussian model)
    #[arg(long)]
    save_gauss: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub data: Option<PathBuf>,
    pub split: String,
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    pub combine: CombineMode,
    pub m_pred: Option<usize>,
    pub seed: u64,
    pub save_logits: bool,
    pub save_gauss: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            data: None,
            split: "test".into(),
            model: None,
            out: "pred".into(),
            combine: CombineMode::Product,
            m_pred: None,
            seed: 0,
            save_logits: false,
            save_gauss: false,
        }
    }
}

#[derive(Serialize)]
struct PredictReport {
    split: String,
    images: usize,
    head: HeadKind,
    members: usize,
    combine: Option<CombineMode>,
    m_pred: usize,
    metrics: Vec<&'static str>,
    mean_nll: f64,
}

/// Per-image outputs before they are stacked into split tensors.
struct ImageOut {
    probs: ProbTensor,
    labels: Vec<i32>,
    maps: Vec<UncertaintyMap>,
    nll: f64,
    members: Vec<Prediction>,
}

fn load_members(dir: &Path) -> CliResult<(ModelIndex, Vec<ToyModelParams>)> {
    require_dir(dir, "model directory")?;
    let index_path = dir.join("models.json");
    if !index_path.exists() {
        return Err(Failure::missing(format!(
            "{} not found",
            index_path.display()
        )));
    }
    let index: ModelIndex = read_json(&index_path)?;
    let members = index
        .members
        .iter()
        .map(|m| load_model(dir.join(m)))
        .collect::<uqseg::Result<Vec<_>>>()?;
    if members.is_empty() {
        return Err(Error::Input("model index lists no members".into()).into());
    }
    Ok((index, members))
}

fn probs_nll(p: &ProbTensor, labels: &[i32]) -> f64 {
    let k = p.classes();
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, &y) in labels.iter().enumerate() {
        if y >= 0 && (y as usize) < k {
            sum -= p.row(i)[y as usize].max(f64::MIN_POSITIVE).ln();
            n += 1;
        }
    }
    sum / n.max(1) as f64
}

pub fn run(args: PredictArgs) -> CliResult<()> {
    let mut cfg: PredictConfig = load_config(args.config.as_deref())?;
    set(&mut cfg.data, args.data.map(Some));
    set(&mut cfg.split, args.split);
    set(&mut cfg.model, args.model.map(Some));
    set(&mut cfg.out, args.out);
    if let Some(c) = args.combine {
        cfg.combine = match c.as_str() {
            "product" => CombineMode::Product,
            "mixture" => CombineMode::Mixture,
            other => return Err(Failure::usage(format!("unknown combine rule {other:?}"))),
        };
    }
    set(&mut cfg.m_pred, args.m_pred.map(Some));
    set(&mut cfg.seed, args.seed);
    cfg.save_logits |= args.save_logits;
    cfg.save_gauss |= args.save_gauss;
    let split_name = SplitName::parse(&cfg.split)?;
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| Failure::usage("--data is required"))?;
    let model_dir = cfg
        .model
        .clone()
        .ok_or_else(|| Failure::usage("--model is required"))?;

    require_dir(&data, "dataset")?;
    let (manifest, split) = load_split(&data, split_name)?;
    let (index, members) = load_members(&model_dir)?;
    let head = index.head;
    let m = cfg.m_pred.unwrap_or(index.m_pred);
    if head == HeadKind::Gaussian && m < 2 {
        return Err(Failure::usage(
            "--m-pred must be at least 2 for Gaussian heads",
        ));
    }
    let ensemble = members.len() > 1;
    if ensemble && head == HeadKind::Gaussian && cfg.combine == CombineMode::Product {
        return Err(Error::Config(
            "product combination needs deterministic members; use --combine mixture".into(),
        )
        .into());
    }
    for p in &members {
        if p.features.channel_std != manifest.channel_std || p.kind != head {
            return Err(
                Error::Input("model was trained on a different dataset or head".into()).into(),
            );
        }
    }
    let shape = manifest.image_shape;
    let classes = manifest.num_classes;

    let outputs = map_range(split.len(), |i| -> uqseg::Result<ImageOut> {
        let seed = mix_seed(cfg.seed, i as u64);
        let image = split.image(i);
        let labels = split.labels_of(i);
        let preds = members
            .iter()
            .map(|p| p.predict(shape, image, m, seed))
            .collect::<uqseg::Result<Vec<_>>>()?;
        let (probs, nll) = if ensemble {
            let probs = match cfg.combine {
                CombineMode::Product => {
                    let logits: Vec<_> = preds
                        .iter()
                        .map(|p| p.logits.clone().expect("deterministic"))
                        .collect();
                    combine_product(&logits)?
                }
                CombineMode::Mixture => {
                    let probs: Vec<_> = preds.iter().map(|p| p.probs.clone()).collect();
                    combine_mixture(&probs)?
                }
            };
            let nll = probs_nll(&probs, labels);
            (probs, nll)
        } else {
            let p = &preds[0];
            let nll = match &p.gauss {
                Some(g) => per_pixel_nll(g, labels, m, seed)?,
                None => probs_nll(&p.probs, labels),
            };
            (p.probs.clone(), nll)
        };
        let mut maps = vec![normalized_entropy(&probs)?, maxprob_uncertainty(&probs)?];
        if ensemble {
            let masks: Vec<Vec<i32>> = preds.iter().map(|p| p.labels.clone()).collect();
            maps.push(categorical_variation(&masks, classes)?);
            let member_probs: Vec<_> = preds.iter().map(|p| p.probs.clone()).collect();
            maps.push(intermodel_variance(&member_probs)?);
        } else if let Some(g) = &preds[0].gauss {
            maps.push(categorical_variation(&sample_masks(g, m, seed)?, classes)?);
        }
        Ok(ImageOut {
            labels: probs.argmax(),
            probs,
            maps,
            nll,
            members: preds,
        })
    })
    .into_iter()
    .collect::<uqseg::Result<Vec<_>>>()?;

    let n = outputs.len();
    let (h, w) = (shape.height, shape.width);
    let metric_ids: Vec<MetricId> = outputs[0].maps.iter().map(|u| u.metric).collect();
    // Inter-model variance is unscaled per image; rescale once over the split.
    let rescaled = match metric_ids
        .iter()
        .position(|id| *id == MetricId::IntermodelVariance)
    {
        Some(j) => {
            let mut maps: Vec<UncertaintyMap> = outputs.iter().map(|o| o.maps[j].clone()).collect();
            rescale_maps(&mut maps)?;
            Some((j, maps.into_iter().flat_map(|u| u.values).collect()))
        }
        None => None,
    };
    write_all(
        &cfg,
        &outputs,
        &metric_ids,
        rescaled,
        head,
        members.len(),
        m,
        n,
        h,
        w,
        classes,
    )
}

#[allow(clippy::too_many_arguments)]
fn write_all(
    cfg: &PredictConfig,
    outputs: &[ImageOut],
    metric_ids: &[MetricId],
    rescaled: Option<(usize, Vec<f64>)>,
    head: HeadKind,
    n_members: usize,
    m: usize,
    n: usize,
    h: usize,
    w: usize,
    k: usize,
) -> CliResult<()> {
    let dir = RunDir::create(&cfg.out)?;
    let probs: Vec<f64> = outputs
        .iter()
        .flat_map(|o| o.probs.data().iter().copied())
        .collect();
    write_tensor(
        dir.join("probs.uqt"),
        &Tensor::from_f64(vec![n, h, w, k], probs)?,
    )?;
    let labels: Vec<i32> = outputs
        .iter()
        .flat_map(|o| o.labels.iter().copied())
        .collect();
    write_tensor(
        dir.join("pred.uqt"),
        &Tensor::from_i32(vec![n, h, w], labels)?,
    )?;
    let nll: Vec<f64> = outputs.iter().map(|o| o.nll).collect();
    write_tensor(
        dir.join("nll.uqt"),
        &Tensor::from_f64(vec![n], nll.clone())?,
    )?;

    let udir = dir.subdir("uncertainty")?;
    for (j, id) in metric_ids.iter().enumerate() {
        let values = match &rescaled {
            Some((r, v)) if *r == j => v.clone(),
            _ => outputs
                .iter()
                .flat_map(|o| o.maps[j].values.iter().copied())
                .collect(),
        };
        write_tensor(
            udir.join(format!("{}.uqt", id.name())),
            &Tensor::from_f64(vec![n, h, w], values)?,
        )?;
    }
    let single = n_members == 1;
    if cfg.save_logits && single && head == HeadKind::Deterministic {
        let logits: Vec<f64> = outputs
            .iter()
            .flat_map(|o| {
                o.members[0]
                    .logits
                    .as_ref()
                    .expect("deterministic")
                    .data()
                    .iter()
                    .copied()
            })
            .collect();
        write_tensor(
            dir.join("logits.uqt"),
            &Tensor::from_f64(vec![n, h, w, k], logits)?,
        )?;
    }
    if cfg.save_gauss && single && head == HeadKind::Gaussian {
        let gdir = dir.subdir("gauss")?;
        for (i, o) in outputs.iter().enumerate() {
            write_gauss_params(
                gdir.join(format!("{i:05}")),
                o.members[0].gauss.as_ref().expect("gaussian"),
            )?;
        }
    }
    dir.write_config("predict", cfg)?;
    dir.write_report(
        "predict",
        &PredictReport {
            split: cfg.split.clone(),
            images: n,
            head,
            members: n_members,
            combine: (!single).then_some(cfg.combine),
            m_pred: m,
            metrics: metric_ids.iter().map(|id| id.name()).collect(),
            mean_nll: nll.iter().sum::<f64>() / n.max(1) as f64,
        },
    )?;
    println!("{}", dir.path.display());
    Ok(())
}

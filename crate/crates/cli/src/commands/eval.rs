use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use uqseg::dataset::{load_split, SplitName};
use uqseg::eval::svg::{pr_plot, scatter_plot, Series};
use uqseg::eval::{
    image_summary, noise_pr_curve, precision_at_recall, reject_pr_curve, rejection_point,
    seg_scores, ue_pr_curve, PrCurve, DEFAULT_MAX_POINTS,
};
use uqseg::metrics::MetricId;
use uqseg::tensor::{curve_csv_string, read_tensor, TensorData};
use uqseg::Error;

use crate::run::{load_config, require_dir, set, CliResult, Failure, RunDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Seg,
    Ue,
    Reject,
    Noise,
    Image,
}

impl EvalTask {
    fn name(self) -> &'static str {
        match self {
            EvalTask::Seg => "seg",
            EvalTask::Ue => "ue",
            EvalTask::Reject => "reject",
            EvalTask::Noise => "noise",
            EvalTask::Image => "image",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<EvalTask>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Directory written by `uqseg predict`
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Uncertainty map stored by predict: entropy, maxprob, categorical_variation, intermodel_variance
    #[arg(long)]
    metric: Option<String>,
    /// Explicit `[n, H, W]` uncertainty tensor, overriding `--metric`
    #[arg(long)]
    uncertainty: Option<PathBuf>,
    /// Cap on emitted curve points; 0 keeps every point
    #[arg(long)]
    max_points: Option<usize>,
    /// Recall at which precision is reported
    #[arg(long)]
    recall: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots
    #[arg(long)]
    plots: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub task: EvalTask,
    pub data: Option<PathBuf>,
    pub split: String,
    pub pred: Option<PathBuf>,
    pub metric: String,
    pub uncertainty: Option<PathBuf>,
    pub max_points: usize,
    pub recall: f64,
    pub reject_fractions: Vec<f64>,
    pub out: PathBuf,
    pub plots: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            task: EvalTask::Seg,
            data: None,
            split: "test".into(),
            pred: None,
            metric: "entropy".into(),
            uncertainty: None,
            max_points: DEFAULT_MAX_POINTS,
            recall: 0.5,
            reject_fractions: vec![0.0, 0.1, 0.2, 0.3, 0.5],
            out: "eval".into(),
            plots: false,
        }
    }
}

#[derive(Serialize)]
struct CurveSummary {
    metric: String,
    points: usize,
    total_positives: usize,
    total_pixels: usize,
    recall: f64,
    precision_at_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
}

fn summarize(curve: &PrCurve, metric: &str, recall: f64) -> CurveSummary {
    let at = precision_at_recall(curve, recall);
    CurveSummary {
        metric: metric.to_string(),
        points: curve.points.len(),
        total_positives: curve.total_positives,
        total_pixels: curve.total_pixels,
        recall,
        precision_at_recall: at,
        baseline_precision: curve.baseline_precision,
        margin: at.zip(curve.baseline_precision).map(|(p, b)| p - b),
    }
}

fn read_f64(path: &Path, len: usize, what: &str) -> CliResult<Vec<f64>> {
    if !path.exists() {
        return Err(Failure::missing(format!(
            "{what} {} not found",
            path.display()
        )));
    }
    let t = read_tensor(path)?;
    let v: Vec<f64> = match t.data() {
        TensorData::F64(v) => v.clone(),
        TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
        _ => {
            return Err(
                Error::Format(format!("{}: expected a float tensor", path.display())).into(),
            )
        }
    };
    if v.len() != len {
        return Err(Error::Shape(format!(
            "{}: {} values, expected {len}",
            path.display(),
            v.len()
        ))
        .into());
    }
    Ok(v)
}

pub fn run(args: EvalArgs) -> CliResult<()> {
    let mut cfg: EvalConfig = load_config(args.config.as_deref())?;
    set(&mut cfg.task, args.task);
    set(&mut cfg.data, args.data.map(Some));
    set(&mut cfg.split, args.split);
    set(&mut cfg.pred, args.pred.map(Some));
    set(&mut cfg.metric, args.metric);
    set(&mut cfg.uncertainty, args.uncertainty.map(Some));
    set(&mut cfg.max_points, args.max_points);
    set(&mut cfg.recall, args.recall);
    set(&mut cfg.out, args.out);
    cfg.plots |= args.plots;
    if !(0.0..=1.0).contains(&cfg.recall) {
        return Err(Error::Config(format!("recall {} outside [0, 1]", cfg.recall)).into());
    }
    if cfg.uncertainty.is_none() {
        MetricId::parse(&cfg.metric)?;
    }
    let split_name = SplitName::parse(&cfg.split)?;
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| Failure::usage("--data is required"))?;
    let pred_dir = cfg
        .pred
        .clone()
        .ok_or_else(|| Failure::usage("--pred is required"))?;
    require_dir(&data, "dataset")?;
    require_dir(&pred_dir, "prediction directory")?;

    let (manifest, split) = load_split(&data, split_name)?;
    let classes = manifest.num_classes;
    let image_len = manifest.image_shape.pixels();
    let gt = &split.labels;
    let pred_path = pred_dir.join("pred.uqt");
    if !pred_path.exists() {
        return Err(Failure::missing(format!(
            "{} not found",
            pred_path.display()
        )));
    }
    let pred = read_tensor(&pred_path)?.as_i32()?.to_vec();
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labelled pixels",
            pred.len(),
            gt.len()
        ))
        .into());
    }
    let load_u = || -> CliResult<Vec<f64>> {
        let path = match &cfg.uncertainty {
            Some(p) => p.clone(),
            None => pred_dir
                .join("uncertainty")
                .join(format!("{}.uqt", cfg.metric)),
        };
        read_f64(&path, gt.len(), "uncertainty map")
    };
    let metric = match &cfg.uncertainty {
        Some(_) => "custom".to_string(),
        None => cfg.metric.clone(),
    };
    let max_points = (cfg.max_points > 0).then_some(cfg.max_points);

    let dir = RunDir::create(&cfg.out)?;
    let task = cfg.task;
    let write_curve = |curve: &PrCurve| -> CliResult<()> {
        dir.subdir("curves")?;
        dir.write_text(
            &format!("curves/{}.csv", task.name()),
            &curve_csv_string(&curve.points)?,
        )?;
        if cfg.plots {
            dir.subdir("plots")?;
            let series = Series {
                label: &metric,
                points: curve
                    .points
                    .iter()
                    .map(|p| (p.recall, p.precision))
                    .collect(),
            };
            let title = format!("{} precision-recall", task.name());
            dir.write_text(
                &format!("plots/{}.svg", task.name()),
                &pr_plot(&title, &[series], curve.baseline_precision),
            )?;
        }
        Ok(())
    };

    let report = match task {
        EvalTask::Seg => serde_json::to_value(seg_scores(&pred, gt, image_len, classes)?),
        EvalTask::Ue => {
            let curve = ue_pr_curve(&load_u()?, &pred, gt, classes, max_points)?;
            write_curve(&curve)?;
            serde_json::to_value(summarize(&curve, &metric, cfg.recall))
        }
        EvalTask::Reject => {
            let u = load_u()?;
            let curve = reject_pr_curve(&u, &pred, gt, classes, max_points)?;
            write_curve(&curve)?;
            let rejection = cfg
                .reject_fractions
                .iter()
                .map(|&f| rejection_point(&u, &pred, gt, classes, f))
                .collect::<uqseg::Result<Vec<_>>>()?;
            serde_json::to_value(serde_json::json!({
                "curve": summarize(&curve, &metric, cfg.recall),
                "rejection": rejection,
            }))
        }
        EvalTask::Noise => {
            let flags = split.noise.as_ref().ok_or_else(|| {
                Failure::missing(format!(
                    "split {} has no noise masks; run uqseg corrupt first",
                    cfg.split
                ))
            })?;
            let noise: Vec<bool> = flags.iter().map(|&f| f != 0).collect();
            let curve = noise_pr_curve(&load_u()?, &pred, gt, &noise, classes, max_points)?;
            write_curve(&curve)?;
            serde_json::to_value(summarize(&curve, &metric, cfg.recall))
        }
        EvalTask::Image => {
            let nll_path = pred_dir.join("nll.uqt");
            let nll = if nll_path.exists() {
                Some(read_f64(&nll_path, split.len(), "NLL")?)
            } else {
                None
            };
            let r = image_summary(&load_u()?, &pred, gt, image_len, classes, nll.as_deref())?;
            let mut csv = String::from("image,mean_uncertainty,median_uncertainty,nll,miou\n");
            for (i, s) in r.images.iter().enumerate() {
                let nll = s.nll.map(|v| format!("{v:.16e}")).unwrap_or_default();
                let _ = writeln!(
                    csv,
                    "{i},{:.16e},{:.16e},{nll},{:.16e}",
                    s.mean_uncertainty, s.median_uncertainty, s.miou
                );
            }
            dir.subdir("curves")?;
            dir.write_text("curves/image.csv", &csv)?;
            if cfg.plots {
                dir.subdir("plots")?;
                let pts: Vec<(f64, f64)> = r
                    .images
                    .iter()
                    .map(|s| (s.mean_uncertainty, s.miou))
                    .collect();
                dir.write_text(
                    "plots/image.svg",
                    &scatter_plot(
                        "per-image uncertainty vs mIoU",
                        &format!("mean {metric}"),
                        "mIoU",
                        &pts,
                    ),
                )?;
            }
            serde_json::to_value(r)
        }
    }
    .map_err(Error::from)?;

    dir.write_config("eval", &cfg)?;
    dir.write_report(
        "eval",
        &serde_json::json!({ "task": task, "split": cfg.split, "result": report }),
    )?;
    println!("{}", dir.path.display());
    Ok(())
}

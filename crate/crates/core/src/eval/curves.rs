//! Exact threshold sweeps. Each curve visits every distinct uncertainty value
//! once after a single sort; emitted curves are then thinned evenly in rank.

use serde::{Deserialize, Serialize};

use super::{check_pred_gt, check_uncertainty, is_valid};
use crate::error::{Error, Result};
use crate::tensor::CurvePoint;

pub const DEFAULT_MAX_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveTask {
    /// Flag misclassified pixels by `u > T`.
    Ue,
    /// Keep predictions with `u <= T`; macro precision/recall of what is kept.
    Reject,
    /// Flag corrupted pixels by `u > T`.
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub task: CurveTask,
    /// Points in strictly increasing threshold order.
    pub points: Vec<CurvePoint>,
    pub total_positives: usize,
    pub total_pixels: usize,
    /// Expected precision of i.i.d. uniform uncertainty (noise task only).
    pub baseline_precision: Option<f64>,
}

/// Keeps at most `max` points, evenly spaced in rank and always including
/// both ends.
pub fn subsample_rank(points: Vec<CurvePoint>, max: usize) -> Vec<CurvePoint> {
    let n = points.len();
    if max == 0 || n <= max {
        return points;
    }
    if max == 1 {
        return vec![points[n - 1]];
    }
    (0..max)
        .map(|i| points[(i * (n - 1) + (max - 1) / 2) / (max - 1)])
        .collect()
}

/// Indices of `u` sorted by decreasing value.
fn order_desc(u: &[f64], keep: &[usize]) -> Vec<usize> {
    let mut idx = keep.to_vec();
    idx.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
    idx
}

/// Half-open ranges of `idx` holding equal `u` values.
fn groups(u: &[f64], idx: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let start = i;
        let v = u[idx[i]];
        while i < idx.len() && u[idx[i]] == v {
            i += 1;
        }
        out.push(start..i);
    }
    out
}

fn finish(
    task: CurveTask,
    mut points: Vec<CurvePoint>,
    positives: usize,
    pixels: usize,
    baseline: Option<f64>,
    max_points: Option<usize>,
) -> PrCurve {
    points.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    PrCurve {
        task,
        points: subsample_rank(points, max_points.unwrap_or(usize::MAX)),
        total_positives: positives,
        total_pixels: pixels,
        baseline_precision: baseline,
    }
}

/// Uncertainty-error curve: positives are misclassified labelled pixels and a
/// pixel is flagged when `u > T`. For every distinct value `v` the threshold
/// is the next float below `v`, so the point flags exactly `{u >= v}`.
pub fn ue_pr_curve(
    u: &[f64],
    pred: &[i32],
    gt: &[i32],
    classes: usize,
    max_points: Option<usize>,
) -> Result<PrCurve> {
    check_pred_gt(pred, gt, classes)?;
    check_uncertainty(u, gt.len())?;
    let valid: Vec<usize> = (0..gt.len())
        .filter(|&i| is_valid(gt[i], classes))
        .collect();
    let positives = valid.iter().filter(|&&i| pred[i] != gt[i]).count();
    if positives == 0 {
        return Err(Error::DegenerateTask("no misclassified pixels".into()));
    }
    let idx = order_desc(u, &valid);
    let (mut flagged, mut tp) = (0usize, 0usize);
    let mut points = Vec::new();
    for g in groups(u, &idx) {
        for &i in &idx[g.clone()] {
            flagged += 1;
            tp += (pred[i] != gt[i]) as usize;
        }
        points.push(CurvePoint {
            threshold: u[idx[g.start]].next_down(),
            precision: tp as f64 / flagged as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(finish(
        CurveTask::Ue,
        points,
        positives,
        valid.len(),
        None,
        max_points,
    ))
}

struct MacroCounts {
    tp: Vec<usize>,
    predicted: Vec<usize>,
    gt_total: Vec<usize>,
}

impl MacroCounts {
    fn precision_recall(&self) -> Option<(f64, f64)> {
        let (mut ps, mut pn) = (0.0, 0usize);
        let (mut rs, mut rn) = (0.0, 0usize);
        for k in 0..self.tp.len() {
            if self.predicted[k] > 0 {
                ps += self.tp[k] as f64 / self.predicted[k] as f64;
                pn += 1;
            }
            if self.gt_total[k] > 0 {
                rs += self.tp[k] as f64 / self.gt_total[k] as f64;
                rn += 1;
            }
        }
        (pn > 0 && rn > 0).then(|| (ps / pn as f64, rs / rn as f64))
    }
}

/// Rejection curve: predictions with `u <= T` are kept. Precision averages
/// over classes with at least one kept prediction; recall divides by all
/// labelled pixels of the class, kept or not.
pub fn reject_pr_curve(
    u: &[f64],
    pred: &[i32],
    gt: &[i32],
    classes: usize,
    max_points: Option<usize>,
) -> Result<PrCurve> {
    check_pred_gt(pred, gt, classes)?;
    check_uncertainty(u, gt.len())?;
    let valid: Vec<usize> = (0..gt.len())
        .filter(|&i| is_valid(gt[i], classes))
        .collect();
    if valid.is_empty() {
        return Err(Error::EmptyInput("no labelled pixels".into()));
    }
    let mut counts = MacroCounts {
        tp: vec![0; classes],
        predicted: vec![0; classes],
        gt_total: vec![0; classes],
    };
    for &i in &valid {
        counts.gt_total[gt[i] as usize] += 1;
    }
    let mut idx = order_desc(u, &valid);
    idx.reverse();
    let mut points = Vec::new();
    for g in groups(u, &idx) {
        for &i in &idx[g.clone()] {
            counts.predicted[pred[i] as usize] += 1;
            if pred[i] == gt[i] {
                counts.tp[pred[i] as usize] += 1;
            }
        }
        if let Some((precision, recall)) = counts.precision_recall() {
            points.push(CurvePoint {
                threshold: u[idx[g.start]],
                precision,
                recall,
            });
        }
    }
    Ok(finish(
        CurveTask::Reject,
        points,
        valid.len(),
        valid.len(),
        None,
        max_points,
    ))
}

/// Uncertainty-noise curve: positives are corrupted labelled pixels. Flagged
/// uncorrupted pixels that the model got wrong count neither for nor against
/// precision; points whose flagged set holds only such pixels are omitted.
pub fn noise_pr_curve(
    u: &[f64],
    pred: &[i32],
    gt: &[i32],
    noise: &[bool],
    classes: usize,
    max_points: Option<usize>,
) -> Result<PrCurve> {
    check_pred_gt(pred, gt, classes)?;
    check_uncertainty(u, gt.len())?;
    if noise.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} noise flags for {} pixels",
            noise.len(),
            gt.len()
        )));
    }
    let valid: Vec<usize> = (0..gt.len())
        .filter(|&i| is_valid(gt[i], classes))
        .collect();
    let positives = valid.iter().filter(|&&i| noise[i]).count();
    if positives == 0 {
        return Err(Error::DegenerateTask("no corrupted pixels".into()));
    }
    let clean_correct = valid
        .iter()
        .filter(|&&i| !noise[i] && pred[i] == gt[i])
        .count();
    let idx = order_desc(u, &valid);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    for g in groups(u, &idx) {
        for &i in &idx[g.clone()] {
            if noise[i] {
                tp += 1;
            } else if pred[i] == gt[i] {
                fp += 1;
            }
        }
        if tp + fp > 0 {
            points.push(CurvePoint {
                threshold: u[idx[g.start]].next_down(),
                precision: tp as f64 / (tp + fp) as f64,
                recall: tp as f64 / positives as f64,
            });
        }
    }
    let baseline = positives as f64 / (positives + clean_correct) as f64;
    Ok(finish(
        CurveTask::Noise,
        points,
        positives,
        valid.len(),
        Some(baseline),
        max_points,
    ))
}

/// Precision at the highest threshold whose recall reaches `recall`.
pub fn precision_at_recall(curve: &PrCurve, recall: f64) -> Option<f64> {
    curve
        .points
        .iter()
        .rev()
        .find(|p| p.recall >= recall)
        .map(|p| p.precision)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectPoint {
    pub threshold: f64,
    pub rejected_fraction: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Macro precision/recall after rejecting (at least) the most uncertain
/// `fraction` of labelled pixels. Ties at the cut are kept.
pub fn rejection_point(
    u: &[f64],
    pred: &[i32],
    gt: &[i32],
    classes: usize,
    fraction: f64,
) -> Result<RejectPoint> {
    check_pred_gt(pred, gt, classes)?;
    check_uncertainty(u, gt.len())?;
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "rejection fraction {fraction} outside [0, 1)"
        )));
    }
    let valid: Vec<usize> = (0..gt.len())
        .filter(|&i| is_valid(gt[i], classes))
        .collect();
    if valid.is_empty() {
        return Err(Error::EmptyInput("no labelled pixels".into()));
    }
    let mut sorted: Vec<f64> = valid.iter().map(|&i| u[i]).collect();
    sorted.sort_by(f64::total_cmp);
    let keep = ((1.0 - fraction) * valid.len() as f64).round().max(1.0) as usize;
    let threshold = sorted[keep - 1];
    let mut counts = MacroCounts {
        tp: vec![0; classes],
        predicted: vec![0; classes],
        gt_total: vec![0; classes],
    };
    let mut kept = 0usize;
    for &i in &valid {
        counts.gt_total[gt[i] as usize] += 1;
        if u[i] <= threshold {
            kept += 1;
            counts.predicted[pred[i] as usize] += 1;
            if pred[i] == gt[i] {
                counts.tp[pred[i] as usize] += 1;
            }
        }
    }
    let (precision, recall) = counts
        .precision_recall()
        .ok_or_else(|| Error::DegenerateTask("nothing retained".into()))?;
    Ok(RejectPoint {
        threshold,
        rejected_fraction: 1.0 - kept as f64 / valid.len() as f64,
        precision,
        recall,
    })
}

use serde::{Deserialize, Serialize};

use super::{check_pred_gt, is_valid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    /// `None` for classes absent from both prediction and ground truth.
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    /// `None` for images without labelled pixels.
    pub per_image_miou: Vec<Option<f64>>,
    /// Row = ground truth, column = prediction.
    pub confusion: Vec<Vec<u64>>,
}

fn confusion(pred: &[i32], gt: &[i32], classes: usize) -> Vec<Vec<u64>> {
    let mut cm = vec![vec![0u64; classes]; classes];
    for (&p, &g) in pred.iter().zip(gt) {
        if is_valid(g, classes) {
            cm[g as usize][p as usize] += 1;
        }
    }
    cm
}

struct ClassCounts {
    tp: u64,
    fp: u64,
    fn_: u64,
}

fn class_counts(cm: &[Vec<u64>], k: usize) -> ClassCounts {
    let tp = cm[k][k];
    let predicted: u64 = cm.iter().map(|row| row[k]).sum();
    let actual: u64 = cm[k].iter().sum();
    ClassCounts {
        tp,
        fp: predicted - tp,
        fn_: actual - tp,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn miou_of(cm: &[Vec<u64>]) -> Option<f64> {
    let ious: Vec<f64> = (0..cm.len())
        .filter_map(|k| {
            let c = class_counts(cm, k);
            let denom = c.tp + c.fp + c.fn_;
            (denom > 0).then(|| c.tp as f64 / denom as f64)
        })
        .collect();
    (!ious.is_empty()).then(|| mean(ious.into_iter()))
}

/// Scores from the global confusion matrix over non-void pixels.
///
/// Macro precision averages over classes that were predicted at least once,
/// macro recall over classes present in the ground truth, IoU and F1 over
/// classes present in either.
pub fn seg_scores(pred: &[i32], gt: &[i32], image_len: usize, classes: usize) -> Result<SegScores> {
    check_pred_gt(pred, gt, classes)?;
    if image_len == 0 || !gt.len().is_multiple_of(image_len) {
        return Err(Error::Shape(format!(
            "{} pixels do not split into images of {image_len}",
            gt.len()
        )));
    }
    let cm = confusion(pred, gt, classes);
    let total: u64 = cm.iter().flatten().sum();
    if total == 0 {
        return Err(Error::EmptyInput("no labelled pixels".into()));
    }
    let counts: Vec<ClassCounts> = (0..classes).map(|k| class_counts(&cm, k)).collect();
    let per_class_iou: Vec<Option<f64>> = counts
        .iter()
        .map(|c| {
            let d = c.tp + c.fp + c.fn_;
            (d > 0).then(|| c.tp as f64 / d as f64)
        })
        .collect();
    let miou = mean(per_class_iou.iter().flatten().copied());
    let precision = mean(
        counts
            .iter()
            .filter(|c| c.tp + c.fp > 0)
            .map(|c| c.tp as f64 / (c.tp + c.fp) as f64),
    );
    let recall = mean(
        counts
            .iter()
            .filter(|c| c.tp + c.fn_ > 0)
            .map(|c| c.tp as f64 / (c.tp + c.fn_) as f64),
    );
    let f1 = mean(
        counts
            .iter()
            .filter(|c| c.tp + c.fp + c.fn_ > 0)
            .map(|c| 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64),
    );
    let correct: u64 = (0..classes).map(|k| cm[k][k]).sum();
    let per_image_miou = pred
        .chunks(image_len)
        .zip(gt.chunks(image_len))
        .map(|(p, g)| miou_of(&confusion(p, g, classes)))
        .collect();
    Ok(SegScores {
        per_class_iou,
        miou,
        f1,
        precision,
        recall,
        accuracy: correct as f64 / total as f64,
        per_image_miou,
        confusion: cm,
    })
}

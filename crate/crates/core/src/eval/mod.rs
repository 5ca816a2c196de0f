//! Evaluation protocol: segmentation scores, the three uncertainty
//! precision-recall tasks, and image-level aggregation.
//!
//! All functions take flattened per-pixel arrays over an evaluation set.
//! A ground-truth label outside `[0, classes)` marks a void pixel; void
//! pixels are dropped from every count.

mod curves;
mod image;
mod seg;
pub mod svg;

pub use curves::{
    noise_pr_curve, precision_at_recall, reject_pr_curve, rejection_point, subsample_rank,
    ue_pr_curve, CurveTask, PrCurve, RejectPoint, DEFAULT_MAX_POINTS,
};
pub use image::{
    image_summary, pearson, per_pixel_nll, spearman, Correlation, ImageReport, ImageUqSummary,
};
pub use seg::{seg_scores, SegScores};

use crate::error::{Error, Result};

pub(crate) fn is_valid(y: i32, classes: usize) -> bool {
    y >= 0 && (y as usize) < classes
}

/// Checks lengths and that every non-void pixel has an in-range prediction.
pub(crate) fn check_pred_gt(pred: &[i32], gt: &[i32], classes: usize) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            gt.len()
        )));
    }
    if classes < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    for (i, (&p, &g)) in pred.iter().zip(gt).enumerate() {
        if is_valid(g, classes) && !is_valid(p, classes) {
            return Err(Error::Input(format!(
                "prediction {p} at pixel {i} is not a class id"
            )));
        }
    }
    Ok(())
}

pub(crate) fn check_uncertainty(u: &[f64], n: usize) -> Result<()> {
    if u.len() != n {
        return Err(Error::Shape(format!(
            "{} uncertainty values for {n} pixels",
            u.len()
        )));
    }
    if let Some(v) = u.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Input(format!(
            "uncertainty {v} outside [0, 1]; rescale before evaluation"
        )));
    }
    Ok(())
}

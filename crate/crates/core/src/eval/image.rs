use serde::{Deserialize, Serialize};

use super::{check_pred_gt, is_valid, seg_scores};
use crate::error::{Error, Result};
use crate::gauss::{mc_log_likelihood, GaussLogitParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageUqSummary {
    pub mean_uncertainty: f64,
    pub median_uncertainty: f64,
    pub nll: Option<f64>,
    pub miou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson: f64,
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub images: Vec<ImageUqSummary>,
    pub mean_vs_miou: Correlation,
    pub median_vs_miou: Correlation,
    pub nll_vs_miou: Option<Correlation>,
}

/// Negative Monte-Carlo log-likelihood of an image divided by its number of
/// labelled pixels.
pub fn per_pixel_nll(g: &GaussLogitParams, labels: &[i32], m: usize, seed: u64) -> Result<f64> {
    let n = labels.iter().filter(|&&y| is_valid(y, g.classes())).count();
    Ok(-mc_log_likelihood(g, labels, m, seed)? / n.max(1) as f64)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Undefined(
            "correlation needs at least two images".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined(
            "correlation of a constant sequence".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&ranks(x), &ranks(y))
}

fn correlate(x: &[f64], y: &[f64]) -> Result<Correlation> {
    Ok(Correlation {
        pearson: pearson(x, y)?,
        spearman: spearman(x, y)?,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per-image mean/median uncertainty over labelled pixels, optional per-image
/// NLL, and their correlations with per-image mIoU.
pub fn image_summary(
    u: &[f64],
    pred: &[i32],
    gt: &[i32],
    image_len: usize,
    classes: usize,
    nll: Option<&[f64]>,
) -> Result<ImageReport> {
    check_pred_gt(pred, gt, classes)?;
    super::check_uncertainty(u, gt.len())?;
    let scores = seg_scores(pred, gt, image_len, classes)?;
    let n_images = gt.len() / image_len;
    if let Some(nll) = nll {
        if nll.len() != n_images {
            return Err(Error::Shape(format!(
                "{} NLL values for {n_images} images",
                nll.len()
            )));
        }
    }
    let mut images = Vec::with_capacity(n_images);
    for i in 0..n_images {
        let range = i * image_len..(i + 1) * image_len;
        let mut vals: Vec<f64> = range
            .clone()
            .filter(|&p| is_valid(gt[p], classes))
            .map(|p| u[p])
            .collect();
        let miou = scores.per_image_miou[i]
            .ok_or_else(|| Error::Input(format!("image {i} has no labelled pixels")))?;
        images.push(ImageUqSummary {
            mean_uncertainty: vals.iter().sum::<f64>() / vals.len() as f64,
            median_uncertainty: median(&mut vals),
            nll: nll.map(|v| v[i]),
            miou,
        });
    }
    let miou: Vec<f64> = images.iter().map(|s| s.miou).collect();
    let means: Vec<f64> = images.iter().map(|s| s.mean_uncertainty).collect();
    let medians: Vec<f64> = images.iter().map(|s| s.median_uncertainty).collect();
    Ok(ImageReport {
        mean_vs_miou: correlate(&means, &miou)?,
        median_vs_miou: correlate(&medians, &miou)?,
        nll_vs_miou: nll.map(|v| correlate(v, &miou)).transpose()?,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_relation() {
        let miou = [1.0, 0.8, 0.6, 0.4, 0.2];
        let u = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert!((pearson(&u, &miou).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&u, &miou).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_cases() {
        assert!(matches!(pearson(&[1.0], &[2.0]), Err(Error::Undefined(_))));
        assert!(matches!(
            pearson(&[1.0, 1.0], &[2.0, 3.0]),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn spearman_handles_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn identical_images_have_undefined_correlation() {
        let gt = vec![0, 1, 0, 1];
        let pred = vec![0, 0, 0, 0];
        let u = vec![0.2, 0.4, 0.2, 0.4];
        let err = image_summary(&u, &pred, &gt, 2, 2, None).unwrap_err();
        assert!(matches!(err, Error::Undefined(_)));
    }

    #[test]
    fn accuracy_driven_uncertainty_anticorrelates() {
        // image i gets i wrong pixels out of 4 and uncertainty = error rate
        let mut gt = Vec::new();
        let mut pred = Vec::new();
        let mut u = Vec::new();
        for i in 0..4 {
            for p in 0..4 {
                gt.push(p % 2);
                pred.push(if p < i {
                    1 - p % 2
                } else {
                    p % 2
                });
                u.push(i as f64 / 4.0);
            }
        }
        let r = image_summary(&u, &pred, &gt, 4, 2, None).unwrap();
        assert!(r.mean_vs_miou.pearson < -0.9, "{:?}", r.mean_vs_miou);
        assert_eq!(r.images[0].miou, 1.0);
    }
}

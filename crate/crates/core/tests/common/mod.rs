//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use rand::Rng;
use uqseg::gauss::GaussLogitParams;
use uqseg::model::{loss_and_grad, FeatureSpec, HeadKind, Sample, ToyModelParams};
use uqseg::rng::stream_rng;
use uqseg::tensor::{CurvePoint, ImageShape};

// ---------------------------------------------------------------- gradients

pub const GRAD_SHAPE: ImageShape = ImageShape {
    timesteps: 2,
    channels: 2,
    height: 4,
    width: 4,
};

pub fn grad_instance(kind: HeadKind, seed: u64) -> (ToyModelParams, Vec<f32>, Vec<i32>) {
    let spec = FeatureSpec {
        timesteps: 2,
        channels: 2,
        channel_std: vec![0.8, 1.3],
    };
    let mut p = ToyModelParams::init(kind, 3, 2, 0.5, 0.5, spec, seed).unwrap();
    let mut rng = stream_rng(seed, 99);
    for w in &mut p.weights {
        *w += rng.gen_range(-0.3..0.3);
    }
    let img: Vec<f32> = (0..GRAD_SHAPE.len())
        .map(|_| rng.gen_range(-1.5f32..1.5))
        .collect();
    let labels: Vec<i32> = (0..16).map(|_| rng.gen_range(0..3)).collect();
    (p, img, labels)
}

/// Largest `|fd - g| / max(|fd|, |g|, 1e-8)` over all weights, central
/// differences with step `h` and the noise seed held fixed.
pub fn max_grad_rel_error(kind: HeadKind, seed: u64, m: usize, h: f64) -> f64 {
    let (p, img, labels) = grad_instance(kind, seed);
    let batch = [Sample {
        image: &img,
        labels: &labels,
    }];
    let (_, grad) = loss_and_grad(&p, GRAD_SHAPE, &batch, m, seed).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..p.weights.len() {
        let mut q = p.clone();
        q.weights[i] = p.weights[i] + h;
        let up = loss_and_grad(&q, GRAD_SHAPE, &batch, m, seed).unwrap().0;
        q.weights[i] = p.weights[i] - h;
        let down = loss_and_grad(&q, GRAD_SHAPE, &batch, m, seed).unwrap().0;
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

// ----------------------------------------------------------------- Gaussians

pub fn random_gauss(seed: u64, pixels: usize, classes: usize, rank: usize) -> GaussLogitParams {
    let mut rng = stream_rng(seed, 7);
    let dim = pixels * classes;
    let mu = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let p = (0..dim * rank).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d = (0..dim).map(|_| rng.gen_range(0.1..1.5)).collect();
    GaussLogitParams::new(pixels, classes, rank, mu, p, d).unwrap()
}

/// `P P^T + D`, computed independently of the library.
pub fn dense_covariance(g: &GaussLogitParams) -> Vec<f64> {
    let (n, r) = (g.dim(), g.rank());
    let mut c = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let mut v: f64 = (0..r).map(|q| g.p()[a * r + q] * g.p()[b * r + q]).sum();
            if a == b {
                v += g.d()[a];
            }
            c[a * n + b] = v;
        }
    }
    c
}

/// `E[f(x)]` for `x ~ N(mean, var)` by the trapezoid rule over +-12 sd.
pub fn normal_expectation(mean: f64, var: f64, f: impl Fn(f64) -> f64) -> f64 {
    let sd = var.sqrt();
    let n = 40_000;
    let (lo, hi) = (mean - 12.0 * sd, mean + 12.0 * sd);
    let h = (hi - lo) / n as f64;
    let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let mut s = 0.0;
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        s += w * f(x) * norm * (-0.5 * ((x - mean) / sd).powi(2)).exp();
    }
    s * h
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// -------------------------------------------------------------------- curves

pub struct CurveCase {
    pub u: Vec<f64>,
    pub pred: Vec<i32>,
    pub gt: Vec<i32>,
    pub noise: Vec<bool>,
    pub classes: usize,
}

/// Random case with up to `max_pixels` pixels; half the cases draw `u` from a
/// coarse grid so ties are common, and some ground truth is void.
pub fn random_curve_case(seed: u64, max_pixels: usize) -> CurveCase {
    let mut rng = stream_rng(seed, 3);
    let n = rng.gen_range(1..=max_pixels);
    let classes = rng.gen_range(2..=4);
    let coarse = rng.gen_bool(0.5);
    let levels = rng.gen_range(2..12);
    let void_rate = rng.gen_range(0.0..0.2);
    let noise_rate = rng.gen_range(0.05..0.6);
    let err_rate = rng.gen_range(0.05..0.7);
    let mut case = CurveCase {
        u: vec![],
        pred: vec![],
        gt: vec![],
        noise: vec![],
        classes,
    };
    for _ in 0..n {
        let u = if coarse {
            rng.gen_range(0..=levels) as f64 / levels as f64
        } else {
            rng.gen::<f64>()
        };
        let gt = if rng.gen_bool(void_rate) {
            classes as i32
        } else {
            rng.gen_range(0..classes as i32)
        };
        let pred = if gt < classes as i32 && !rng.gen_bool(err_rate) {
            gt
        } else {
            rng.gen_range(0..classes as i32)
        };
        case.u.push(u);
        case.pred.push(pred);
        case.gt.push(gt);
        case.noise.push(rng.gen_bool(noise_rate));
    }
    case
}

fn distinct_valid(case: &CurveCase) -> Vec<f64> {
    let mut v: Vec<f64> = (0..case.u.len())
        .filter(|&i| case.gt[i] >= 0 && (case.gt[i] as usize) < case.classes)
        .map(|i| case.u[i])
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn valid(case: &CurveCase, i: usize) -> bool {
    case.gt[i] >= 0 && (case.gt[i] as usize) < case.classes
}

/// Brute force: for each distinct value `v`, flag `{u >= v}`.
pub fn brute_ue(case: &CurveCase) -> Option<Vec<CurvePoint>> {
    let n = case.u.len();
    let positives = (0..n)
        .filter(|&i| valid(case, i) && case.pred[i] != case.gt[i])
        .count();
    if positives == 0 {
        return None;
    }
    Some(
        distinct_valid(case)
            .into_iter()
            .map(|v| {
                let flagged: Vec<usize> = (0..n)
                    .filter(|&i| valid(case, i) && case.u[i] >= v)
                    .collect();
                let tp = flagged
                    .iter()
                    .filter(|&&i| case.pred[i] != case.gt[i])
                    .count();
                CurvePoint {
                    threshold: v.next_down(),
                    precision: tp as f64 / flagged.len() as f64,
                    recall: tp as f64 / positives as f64,
                }
            })
            .collect(),
    )
}

/// Brute force: for each distinct value `v`, keep `{u <= v}` and macro-average.
pub fn brute_reject(case: &CurveCase) -> Option<Vec<CurvePoint>> {
    let n = case.u.len();
    let k = case.classes;
    let values = distinct_valid(case);
    if values.is_empty() {
        return None;
    }
    let mut out = Vec::new();
    for v in values {
        let (mut ps, mut pn, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
        for c in 0..k as i32 {
            let kept_pred = (0..n)
                .filter(|&i| valid(case, i) && case.u[i] <= v && case.pred[i] == c)
                .count();
            let tp = (0..n)
                .filter(|&i| {
                    valid(case, i) && case.u[i] <= v && case.pred[i] == c && case.gt[i] == c
                })
                .count();
            let total = (0..n).filter(|&i| case.gt[i] == c).count();
            if kept_pred > 0 {
                ps += tp as f64 / kept_pred as f64;
                pn += 1;
            }
            if total > 0 {
                rs += tp as f64 / total as f64;
                rn += 1;
            }
        }
        if pn > 0 && rn > 0 {
            out.push(CurvePoint {
                threshold: v,
                precision: ps / pn as f64,
                recall: rs / rn as f64,
            });
        }
    }
    Some(out)
}

/// Brute force with the exclusion rule: flagged uncorrupted pixels that are
/// misclassified count neither as true nor as false positives.
pub fn brute_noise(case: &CurveCase) -> Option<(Vec<CurvePoint>, f64)> {
    let n = case.u.len();
    let positives = (0..n).filter(|&i| valid(case, i) && case.noise[i]).count();
    if positives == 0 {
        return None;
    }
    let clean_correct = (0..n)
        .filter(|&i| valid(case, i) && !case.noise[i] && case.pred[i] == case.gt[i])
        .count();
    let mut out = Vec::new();
    for v in distinct_valid(case) {
        let flagged = (0..n).filter(|&i| valid(case, i) && case.u[i] >= v);
        let (mut tp, mut fp) = (0usize, 0usize);
        for i in flagged {
            if case.noise[i] {
                tp += 1;
            } else if case.pred[i] == case.gt[i] {
                fp += 1;
            }
        }
        if tp + fp > 0 {
            out.push(CurvePoint {
                threshold: v.next_down(),
                precision: tp as f64 / (tp + fp) as f64,
                recall: tp as f64 / positives as f64,
            });
        }
    }
    Some((out, positives as f64 / (positives + clean_correct) as f64))
}

pub fn same_points(a: &[CurvePoint], b: &[CurvePoint]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.threshold.to_bits() == y.threshold.to_bits()
                && x.precision.to_bits() == y.precision.to_bits()
                && x.recall.to_bits() == y.recall.to_bits()
        })
}

// ------------------------------------------------------------------- metrics

/// Fraction of ordered sample pairs (with replacement) that disagree.
pub fn pair_disagreement(labels: &[i32]) -> f64 {
    let m = labels.len();
    let mut d = 0usize;
    for a in labels {
        for b in labels {
            d += (a != b) as usize;
        }
    }
    d as f64 / (m * m) as f64
}

/// Every count vector of length `k` summing to `m`.
pub fn compositions(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for first in 0..=m {
        for mut rest in compositions(m - first, k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

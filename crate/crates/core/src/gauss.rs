//! Low-rank Gaussian over flattened logits.
//!
//! The logit vector of an image is `z = (z_11..z_1K, .., z_S1..z_SK)`, pixel-major,
//! with `z ~ N(mu, P P^T + D)`. Samples are drawn by reparameterisation,
//! `z = mu + P eps + sqrt(d) * eta`, where sample `j` uses its own RNG stream so
//! every estimator here is reproducible regardless of thread count.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_range, pairwise_sum, pairwise_sum_vecs};
use crate::probs::{argmax, log_softmax, log_sum_exp, softmax_in_place, ProbTensor};
use crate::rng::stream_rng;
use crate::tensor::{read_json, read_tensor, write_json, write_tensor, Tensor};

/// Samples per work unit in parallel reductions. Fixed so that the
/// summation tree never depends on the number of workers.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussLogitParams {
    pixels: usize,
    classes: usize,
    rank: usize,
    mu: Vec<f64>,
    /// `(S*K) x R`, row-major.
    p: Vec<f64>,
    d: Vec<f64>,
}

impl GaussLogitParams {
    pub fn new(
        pixels: usize,
        classes: usize,
        rank: usize,
        mu: Vec<f64>,
        p: Vec<f64>,
        d: Vec<f64>,
    ) -> Result<Self> {
        let dim = pixels * classes;
        if dim == 0 {
            return Err(Error::Parameter("need at least one pixel and class".into()));
        }
        if mu.len() != dim || d.len() != dim || p.len() != dim * rank {
            return Err(Error::Shape(format!(
                "S={pixels} K={classes} R={rank} needs mu/d of {dim} and P of {}, got {}/{}/{}",
                dim * rank,
                mu.len(),
                d.len(),
                p.len()
            )));
        }
        if let Some((i, v)) = d
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::Parameter(format!(
                "d[{i}] = {v} is not strictly positive"
            )));
        }
        if mu.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::Parameter(
                "mu or P contains a non-finite value".into(),
            ));
        }
        Ok(Self {
            pixels,
            classes,
            rank,
            mu,
            p,
            d,
        })
    }

    /// Point mass at `mu` (P = 0, d = `eps`).
    pub fn point_mass(pixels: usize, classes: usize, mu: Vec<f64>, eps: f64) -> Result<Self> {
        let dim = pixels * classes;
        Self::new(pixels, classes, 0, mu, Vec::new(), vec![eps; dim])
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.pixels * self.classes
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Dense covariance `P P^T + D`. Only sensible for small instances.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.dim();
        let r = self.rank;
        let mut cov = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for q in 0..r {
                    s += self.p[a * r + q] * self.p[b * r + q];
                }
                cov[a * n + b] = s;
            }
            cov[a * n + a] += self.d[a];
        }
        cov
    }

    /// Writes `z = mu + P eps + sqrt(d) * eta` into `out`.
    pub fn transform(&self, draw: &LatentDraw, out: &mut [f64]) {
        let r = self.rank;
        for (a, o) in out.iter_mut().enumerate() {
            let mut v = self.mu[a] + self.d[a].sqrt() * draw.eta[a];
            let row = &self.p[a * r..(a + 1) * r];
            for (pq, eq) in row.iter().zip(&draw.eps) {
                v += pq * eq;
            }
            *o = v;
        }
    }

    pub fn draw(&self, seed: u64, sample: usize) -> LatentDraw {
        LatentDraw::new(self.rank, self.dim(), seed, sample)
    }

    fn check_labels(&self, labels: &[i32]) -> Result<usize> {
        if labels.len() != self.pixels {
            return Err(Error::Shape(format!(
                "{} labels for {} pixels",
                labels.len(),
                self.pixels
            )));
        }
        let valid = labels
            .iter()
            .filter(|&&y| is_label(y, self.classes))
            .count();
        if valid == 0 {
            return Err(Error::EmptyInput("all pixels are void".into()));
        }
        Ok(valid)
    }
}

fn is_label(y: i32, classes: usize) -> bool {
    y >= 0 && (y as usize) < classes
}

/// Standard-normal draws behind one logit sample: `eps` (R) then `eta` (S*K).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDraw {
    pub eps: Vec<f64>,
    pub eta: Vec<f64>,
}

impl LatentDraw {
    pub fn new(rank: usize, dim: usize, seed: u64, sample: usize) -> Self {
        let mut rng = stream_rng(seed, sample as u64);
        let eps = (0..rank).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eta = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        LatentDraw { eps, eta }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitSampleSet {
    dim: usize,
    samples: Vec<f64>,
}

impl LogitSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.samples[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.samples.chunks_exact(self.dim)
    }
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Parameter("number of samples M must be >= 1".into()));
    }
    Ok(())
}

pub fn sample_logits(g: &GaussLogitParams, m: usize, seed: u64) -> Result<LogitSampleSet> {
    check_m(m)?;
    let dim = g.dim();
    let per: Vec<Vec<f64>> = map_range(m, |j| {
        let mut z = vec![0.0; dim];
        g.transform(&g.draw(seed, j), &mut z);
        z
    });
    Ok(LogitSampleSet {
        dim,
        samples: per.concat(),
    })
}

/// Reduces `f(j, z_j, acc)` over samples in fixed chunks, summing chunk
/// accumulators pairwise.
fn reduce_samples<F>(g: &GaussLogitParams, m: usize, seed: u64, acc_len: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync + Send,
{
    let dim = g.dim();
    let chunks = m.div_ceil(CHUNK);
    let parts = map_range(chunks, |c| {
        let mut acc = vec![0.0; acc_len];
        let mut z = vec![0.0; dim];
        for j in c * CHUNK..((c + 1) * CHUNK).min(m) {
            g.transform(&g.draw(seed, j), &mut z);
            f(&z, &mut acc);
        }
        acc
    });
    pairwise_sum_vecs(&parts)
}

/// Per-sample log-likelihoods `sum_i log softmax(z^j_i)[y_i]` over non-void pixels.
/// Labels outside `[0, K)` are treated as void.
pub fn sample_log_likelihoods(
    g: &GaussLogitParams,
    labels: &[i32],
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_m(m)?;
    g.check_labels(labels)?;
    let k = g.classes;
    let dim = g.dim();
    Ok(map_range(m, |j| {
        let mut z = vec![0.0; dim];
        g.transform(&g.draw(seed, j), &mut z);
        let mut ls = vec![0.0; k];
        let terms: Vec<f64> = labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| is_label(y, k))
            .map(|(i, &y)| {
                log_softmax(&z[i * k..(i + 1) * k], &mut ls);
                ls[y as usize]
            })
            .collect();
        pairwise_sum(&terms)
    }))
}

/// `log (1/M) sum_j prod_i p(y_i | z^j)`, evaluated with log-sum-exp.
pub fn mc_log_likelihood(g: &GaussLogitParams, labels: &[i32], m: usize, seed: u64) -> Result<f64> {
    let per = sample_log_likelihoods(g, labels, m, seed)?;
    Ok(log_sum_exp(&per) - (m as f64).ln())
}

/// Monte-Carlo estimate of per-pixel marginals `(1/M) sum_j softmax(z^j_i)`.
pub fn marginal_probs(g: &GaussLogitParams, m: usize, seed: u64) -> Result<ProbTensor> {
    check_m(m)?;
    let k = g.classes;
    let sum = reduce_samples(g, m, seed, g.dim(), |z, acc| {
        let mut row = vec![0.0; k];
        for (zi, ai) in z.chunks_exact(k).zip(acc.chunks_exact_mut(k)) {
            row.copy_from_slice(zi);
            softmax_in_place(&mut row);
            for (a, p) in ai.iter_mut().zip(&row) {
                *a += p;
            }
        }
    });
    let inv = 1.0 / m as f64;
    let mut data: Vec<f64> = sum.into_iter().map(|v| v * inv).collect();
    // renormalise away accumulated rounding
    for row in data.chunks_exact_mut(k) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    ProbTensor::new(g.pixels, k, data)
}

/// Marginal-argmax prediction; ties go to the smallest class id.
pub fn predict(g: &GaussLogitParams, m: usize, seed: u64) -> Result<Vec<i32>> {
    Ok(marginal_probs(g, m, seed)?.argmax())
}

/// Argmax segmentation of each of `m` logit samples.
pub fn sample_masks(g: &GaussLogitParams, m: usize, seed: u64) -> Result<Vec<Vec<i32>>> {
    check_m(m)?;
    let k = g.classes;
    let dim = g.dim();
    Ok(map_range(m, |j| {
        let mut z = vec![0.0; dim];
        g.transform(&g.draw(seed, j), &mut z);
        z.chunks_exact(k).map(|row| argmax(row) as i32).collect()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussMeta {
    #[serde(rename = "S")]
    pub pixels: usize,
    #[serde(rename = "K")]
    pub classes: usize,
    #[serde(rename = "R")]
    pub rank: usize,
}

/// Writes `mu.uqt`, `d.uqt` (`[S, K]`), `p.uqt` (`[S, K, R]`, omitted when
/// R = 0) and `meta.json` into `dir`.
pub fn write_gauss_params(dir: impl AsRef<Path>, g: &GaussLogitParams) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (s, k, r) = (g.pixels, g.classes, g.rank);
    write_tensor(
        dir.join("mu.uqt"),
        &Tensor::from_f64(vec![s, k], g.mu.clone())?,
    )?;
    write_tensor(
        dir.join("d.uqt"),
        &Tensor::from_f64(vec![s, k], g.d.clone())?,
    )?;
    if r > 0 {
        write_tensor(
            dir.join("p.uqt"),
            &Tensor::from_f64(vec![s, k, r], g.p.clone())?,
        )?;
    }
    write_json(
        dir.join("meta.json"),
        &GaussMeta {
            pixels: s,
            classes: k,
            rank: r,
        },
    )
}

pub fn read_gauss_params(dir: impl AsRef<Path>) -> Result<GaussLogitParams> {
    let dir = dir.as_ref();
    let meta: GaussMeta = read_json(dir.join("meta.json"))?;
    let (s, k, r) = (meta.pixels, meta.classes, meta.rank);
    let mu = read_tensor(dir.join("mu.uqt"))?;
    mu.expect_dims(&[s, k], "mu")?;
    let d = read_tensor(dir.join("d.uqt"))?;
    d.expect_dims(&[s, k], "d")?;
    let p = if r > 0 {
        let p = read_tensor(dir.join("p.uqt"))?;
        p.expect_dims(&[s, k, r], "P")?;
        p.as_f64()?.to_vec()
    } else {
        Vec::new()
    };
    GaussLogitParams::new(s, k, r, mu.as_f64()?.to_vec(), p, d.as_f64()?.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GaussLogitParams {
        GaussLogitParams::new(
            2,
            2,
            1,
            vec![0.3, -0.1, 1.0, 0.0],
            vec![1.0, -1.0, 0.5, 0.2],
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_positive_d() {
        let err = GaussLogitParams::new(1, 2, 0, vec![0.0; 2], vec![], vec![1.0, 0.0]);
        assert!(matches!(err, Err(Error::Parameter(_))));
        let err = GaussLogitParams::new(1, 2, 0, vec![0.0; 2], vec![], vec![1.0, -2.0]);
        assert!(matches!(err, Err(Error::Parameter(_))));
    }

    #[test]
    fn degenerate_gaussian_samples_equal_mean() {
        let mu = vec![0.5, -2.0, 3.0, 1.25, 0.0, 7.0];
        let g = GaussLogitParams::point_mass(2, 3, mu.clone(), 1e-30).unwrap();
        let s = sample_logits(&g, 50, 9).unwrap();
        assert_eq!(s.len(), 50);
        for z in s.iter() {
            for (a, b) in z.iter().zip(&mu) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = tiny();
        assert_eq!(
            sample_logits(&g, 10, 3).unwrap(),
            sample_logits(&g, 10, 3).unwrap()
        );
        assert_ne!(
            sample_logits(&g, 10, 3).unwrap(),
            sample_logits(&g, 10, 4).unwrap()
        );
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(sample_logits(&tiny(), 0, 0).is_err());
        assert!(marginal_probs(&tiny(), 0, 0).is_err());
    }

    #[test]
    fn point_mass_likelihood_is_deterministic_log_likelihood() {
        let mu = vec![0.5, -2.0, 3.0, 1.25, 0.0, 7.0];
        let g = GaussLogitParams::point_mass(2, 3, mu.clone(), 1e-30).unwrap();
        let labels = [2, 0];
        let ll = mc_log_likelihood(&g, &labels, 1, 0).unwrap();
        let mut ls = [0.0; 3];
        log_softmax(&mu[0..3], &mut ls);
        let mut expected = ls[2];
        log_softmax(&mu[3..6], &mut ls);
        expected += ls[0];
        assert!((ll - expected).abs() < 1e-10);
    }

    #[test]
    fn void_pixels_are_skipped() {
        let mu = vec![0.5, -2.0, 3.0, 1.25];
        let g = GaussLogitParams::point_mass(2, 2, mu.clone(), 1e-30).unwrap();
        let both = mc_log_likelihood(&g, &[1, 2], 1, 0).unwrap();
        let mut ls = [0.0; 2];
        log_softmax(&mu[0..2], &mut ls);
        assert!((both - ls[1]).abs() < 1e-10);
        assert!(matches!(
            mc_log_likelihood(&g, &[2, 2], 1, 0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn shift_invariance_of_likelihood() {
        let mu = vec![0.5, -2.0, 3.0, 1.25, 0.0, 7.0];
        let shifted: Vec<f64> = mu
            .iter()
            .enumerate()
            .map(|(a, v)| v + if a < 3 { 4.0 } else { -1.5 })
            .collect();
        let g1 = GaussLogitParams::point_mass(2, 3, mu, 1e-12).unwrap();
        let g2 = GaussLogitParams::point_mass(2, 3, shifted, 1e-12).unwrap();
        let a = mc_log_likelihood(&g1, &[1, 2], 8, 5).unwrap();
        let b = mc_log_likelihood(&g2, &[1, 2], 8, 5).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn marginals_collapse_to_softmax_of_mean() {
        let mu = vec![0.5, -2.0, 3.0, 1.25, 0.0, 7.0];
        let g = GaussLogitParams::point_mass(2, 3, mu.clone(), 1e-30).unwrap();
        let p = marginal_probs(&g, 16, 1).unwrap();
        for i in 0..2 {
            let mut row = mu[i * 3..(i + 1) * 3].to_vec();
            softmax_in_place(&mut row);
            for k in 0..3 {
                assert!((p.row(i)[k] - row[k]).abs() < 1e-10);
            }
        }
        assert_eq!(predict(&g, 16, 1).unwrap(), vec![2, 2]);
    }

    #[test]
    fn marginal_rows_sum_to_one() {
        let p = marginal_probs(&tiny(), 1000, 2).unwrap();
        p.validate(1e-9).unwrap();
    }

    #[test]
    fn exact_tie_predicts_class_zero() {
        let g = GaussLogitParams::point_mass(1, 3, vec![1.0, 1.0, 1.0], 1e-40).unwrap();
        assert_eq!(predict(&g, 4, 0).unwrap(), vec![0]);
    }

    #[test]
    fn covariance_dense() {
        let g = tiny();
        let c = g.covariance();
        assert!((c[0] - 1.1).abs() < 1e-15);
        assert!((c[1] + 1.0).abs() < 1e-15);
        assert!((c[1 * 4 + 1] - 1.2).abs() < 1e-15);
        assert!((c[2 * 4 + 3] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sample_masks_follow_argmax() {
        let g = tiny();
        let masks = sample_masks(&g, 5, 7).unwrap();
        let zs = sample_logits(&g, 5, 7).unwrap();
        for (mask, z) in masks.iter().zip(zs.iter()) {
            for i in 0..2 {
                assert_eq!(mask[i], argmax(&z[i * 2..i * 2 + 2]) as i32);
            }
        }
    }

    #[test]
    fn params_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let g = tiny();
        write_gauss_params(dir.path(), &g).unwrap();
        assert_eq!(read_gauss_params(dir.path()).unwrap(), g);
        let g0 = GaussLogitParams::point_mass(2, 2, vec![1.0; 4], 0.5).unwrap();
        let d0 = dir.path().join("r0");
        write_gauss_params(&d0, &g0).unwrap();
        assert!(!d0.join("p.uqt").exists());
        assert_eq!(read_gauss_params(&d0).unwrap(), g0);
    }
}

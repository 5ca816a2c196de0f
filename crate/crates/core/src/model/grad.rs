use crate::error::{Error, Result};
use crate::gauss::LatentDraw;
use crate::par::{map_range, pairwise_sum, pairwise_sum_vecs};
use crate::probs::{log_softmax, log_sum_exp};
use crate::rng::mix_seed;
use crate::tensor::ImageShape;

use super::{sigmoid, HeadKind, ToyModelParams};

/// One training image and its label mask.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub image: &'a [f32],
    pub labels: &'a [i32],
}

fn valid(y: i32, classes: usize) -> Option<usize> {
    (y >= 0 && (y as usize) < classes).then_some(y as usize)
}

/// Loss and flat gradient over a batch.
///
/// Deterministic head: mean cross-entropy over all non-void pixels of the
/// batch. Gaussian head: mean over images of the per-pixel MC negative
/// log-likelihood with `m` reparameterised samples; image `b` of the batch
/// draws its noise from `mix_seed(seed, b)`, matching
/// [`crate::gauss::mc_log_likelihood`] under that seed.
pub fn loss_and_grad(
    params: &ToyModelParams,
    shape: ImageShape,
    batch: &[Sample<'_>],
    m: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    params.validate()?;
    let s = shape.pixels();
    for x in batch {
        if x.image.len() != shape.len() || x.labels.len() != s {
            return Err(Error::Shape(
                "batch image or labels do not match shape".into(),
            ));
        }
    }
    let counts: Vec<usize> = batch
        .iter()
        .map(|x| {
            x.labels
                .iter()
                .filter(|&&y| valid(y, params.classes).is_some())
                .count()
        })
        .collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput("all pixels in batch are void".into()));
    }
    match params.kind {
        HeadKind::Deterministic => {
            let parts = map_range(batch.len(), |b| {
                det_image(params, shape, batch[b], total as f64)
            });
            reduce(parts)
        }
        HeadKind::Gaussian => {
            if m == 0 {
                return Err(Error::Parameter("need at least one training sample".into()));
            }
            let images = counts.iter().filter(|&&c| c > 0).count() as f64;
            let parts = map_range(batch.len(), |b| {
                if counts[b] == 0 {
                    return Ok((0.0, vec![0.0; params.num_weights()]));
                }
                let scale = 1.0 / (images * counts[b] as f64);
                gauss_image(params, shape, batch[b], m, mix_seed(seed, b as u64), scale)
            });
            reduce(parts)
        }
    }
}

fn reduce(parts: Vec<Result<(f64, Vec<f64>)>>) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<(f64, Vec<f64>)> = parts.into_iter().collect::<Result<_>>()?;
    let losses: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let grads: Vec<Vec<f64>> = parts.into_iter().map(|p| p.1).collect();
    Ok((pairwise_sum(&losses), pairwise_sum_vecs(&grads)))
}

/// Accumulates `dW[o] += g[i,o] f_i` and `db[o] += g[i,o]` for one block.
fn backprop_block(
    params: &ToyModelParams,
    block: super::Block,
    feats: &[f64],
    dout: &[f64],
    grad: &mut [f64],
) {
    let f = params.feature_len();
    let out = block.out;
    for (fi, gi) in feats.chunks_exact(f).zip(dout.chunks_exact(out)) {
        for (o, &g) in gi.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut grad[block.w + o * f..block.w + (o + 1) * f];
            for (w, &x) in row.iter_mut().zip(fi) {
                *w += g * x;
            }
            grad[block.b + o] += g;
        }
    }
}

fn det_image(
    params: &ToyModelParams,
    shape: ImageShape,
    x: Sample<'_>,
    total: f64,
) -> Result<(f64, Vec<f64>)> {
    let k = params.classes;
    let feats = super::features::extract(&params.features, shape, x.image)?;
    let block = params.blocks()[0];
    let mut dlogits = params.apply_block(block, &feats, shape.pixels());
    let mut losses = Vec::with_capacity(x.labels.len());
    let mut logp = vec![0.0; k];
    for (row, &y) in dlogits.chunks_exact_mut(k).zip(x.labels) {
        match valid(y, k) {
            Some(y) => {
                log_softmax(row, &mut logp);
                losses.push(-logp[y]);
                for (g, lp) in row.iter_mut().zip(&logp) {
                    *g = lp.exp() / total;
                }
                row[y] -= 1.0 / total;
            }
            None => row.iter_mut().for_each(|g| *g = 0.0),
        }
    }
    let mut grad = vec![0.0; params.num_weights()];
    backprop_block(params, block, &feats, &dlogits, &mut grad);
    Ok((pairwise_sum(&losses) / total, grad))
}

fn gauss_image(
    params: &ToyModelParams,
    shape: ImageShape,
    x: Sample<'_>,
    m: usize,
    seed: u64,
    scale: f64,
) -> Result<(f64, Vec<f64>)> {
    let (k, r) = (params.classes, params.rank);
    let s = shape.pixels();
    let dim = s * k;
    let feats = super::features::extract(&params.features, shape, x.image)?;
    let heads = params.gauss_heads(&feats, s);
    let g = heads.to_params(params)?;
    let labels: Vec<Option<usize>> = x.labels.iter().map(|&y| valid(y, k)).collect();

    // Forward: per-sample joint log-likelihoods; keep softmax residuals.
    let mut draws = Vec::with_capacity(m);
    let mut resid = Vec::with_capacity(m);
    let mut ll = Vec::with_capacity(m);
    let mut terms = Vec::with_capacity(s);
    for j in 0..m {
        let draw = LatentDraw::new(r, dim, seed, j);
        let mut z = vec![0.0; dim];
        g.transform(&draw, &mut z);
        terms.clear();
        for (row, y) in z.chunks_exact_mut(k).zip(&labels) {
            match *y {
                Some(y) => {
                    // row <- softmax(row) - onehot(y)
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let zy = row[y] - max;
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    terms.push(zy - sum.ln());
                    let inv = 1.0 / sum;
                    row.iter_mut().for_each(|v| *v *= inv);
                    row[y] -= 1.0;
                }
                None => row.iter_mut().for_each(|v| *v = 0.0),
            }
        }
        ll.push(pairwise_sum(&terms));
        draws.push(draw);
        resid.push(z);
    }
    let lse = log_sum_exp(&ll);
    let loss = -(lse - (m as f64).ln()) * scale;

    // Backward: dL/dz_j = scale * w_j * (softmax - onehot).
    let mut dmu = vec![0.0; dim];
    let mut dd = vec![0.0; dim];
    let mut dp = vec![0.0; dim * r];
    for j in 0..m {
        let w = (ll[j] - lse).exp() * scale;
        if w == 0.0 {
            continue;
        }
        let draw = &draws[j];
        for (a, &res) in resid[j].iter().enumerate() {
            if res == 0.0 {
                continue;
            }
            let dz = w * res;
            dmu[a] += dz;
            dd[a] += dz * draw.eta[a];
            for (q, e) in dp[a * r..(a + 1) * r].iter_mut().zip(&draw.eps) {
                *q += dz * e;
            }
        }
    }
    // Chain through d = s_D softplus(a) + floor and P = s_P q.
    for (a, v) in dd.iter_mut().enumerate() {
        *v *= params.scale_d * sigmoid(heads.pre_d[a]) / (2.0 * g.d()[a].sqrt());
    }
    dp.iter_mut().for_each(|v| *v *= params.scale_p);

    let blocks = params.blocks();
    let mut grad = vec![0.0; params.num_weights()];
    backprop_block(params, blocks[0], &feats, &dmu, &mut grad);
    backprop_block(params, blocks[1], &feats, &dd, &mut grad);
    backprop_block(params, blocks[2], &feats, &dp, &mut grad);
    Ok((loss, grad))
}

//! Per-pixel uncertainty measures. Every map produced here lies in `[0, 1]`
//! once rescaled; higher means more uncertain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{marginal_probs, sample_masks, GaussLogitParams};
use crate::probs::ProbTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Entropy,
    Maxprob,
    MarginalEntropy,
    CategoricalVariation,
    IntermodelVariance,
}

impl MetricId {
    pub fn name(self) -> &'static str {
        match self {
            MetricId::Entropy => "entropy",
            MetricId::Maxprob => "maxprob",
            MetricId::MarginalEntropy => "marginal_entropy",
            MetricId::CategoricalVariation => "categorical_variation",
            MetricId::IntermodelVariance => "intermodel_variance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "entropy" => MetricId::Entropy,
            "maxprob" => MetricId::Maxprob,
            "marginal_entropy" => MetricId::MarginalEntropy,
            "categorical_variation" => MetricId::CategoricalVariation,
            "intermodel_variance" => MetricId::IntermodelVariance,
            other => return Err(Error::Config(format!("unknown metric {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyMap {
    pub values: Vec<f64>,
    pub metric: MetricId,
    pub rescaled: bool,
}

impl UncertaintyMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

const ROW_TOL: f64 = 1e-6;

/// `-sum p ln p / ln K` per pixel, with `0 ln 0 = 0`.
pub fn normalized_entropy(p: &ProbTensor) -> Result<UncertaintyMap> {
    let k = p.classes();
    if k < 2 {
        return Err(Error::Undefined("normalised entropy needs K >= 2".into()));
    }
    p.validate(ROW_TOL)?;
    // H / ln K = 1 - sum q ln(qK) / ln K, which is exact at both ends:
    // uniform rows give qK = 1 and one-hot rows give ln K / ln K.
    let kf = k as f64;
    let norm = kf.ln();
    let values = p
        .rows()
        .map(|row| {
            let gap: f64 = row
                .iter()
                .filter(|&&q| q > 0.0)
                .map(|&q| q * (q * kf).ln())
                .sum();
            (1.0 - gap / norm).clamp(0.0, 1.0)
        })
        .collect();
    Ok(UncertaintyMap {
        values,
        metric: MetricId::Entropy,
        rescaled: true,
    })
}

/// `1 - max_k p_k` per pixel.
pub fn maxprob_uncertainty(p: &ProbTensor) -> Result<UncertaintyMap> {
    p.validate(ROW_TOL)?;
    let values = p
        .rows()
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (1.0 - m).clamp(0.0, 1.0)
        })
        .collect();
    Ok(UncertaintyMap {
        values,
        metric: MetricId::Maxprob,
        rescaled: true,
    })
}

/// Normalised entropy of the Monte-Carlo marginals of a Gaussian logit model.
pub fn marginal_entropy(g: &GaussLogitParams, m: usize, seed: u64) -> Result<UncertaintyMap> {
    let mut u = normalized_entropy(&marginal_probs(g, m, seed)?)?;
    u.metric = MetricId::MarginalEntropy;
    Ok(u)
}

/// Coefficient of unalikeability `1 - sum_k (n_k / M)^2` across `M` sampled
/// segmentations: the chance that two samples drawn with replacement disagree.
/// Labels outside `[0, classes)` are counted as one extra category.
pub fn categorical_variation(masks: &[Vec<i32>], classes: usize) -> Result<UncertaintyMap> {
    let m = masks.len();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let s = masks[0].len();
    if masks.iter().any(|mk| mk.len() != s) {
        return Err(Error::Shape("sampled masks differ in size".into()));
    }
    let mut counts = vec![0u32; classes + 1];
    let inv = 1.0 / m as f64;
    let values = (0..s)
        .map(|i| {
            counts.iter_mut().for_each(|c| *c = 0);
            for mk in masks {
                let y = mk[i];
                let slot = if y >= 0 && (y as usize) < classes {
                    y as usize
                } else {
                    classes
                };
                counts[slot] += 1;
            }
            let agree: f64 = counts.iter().map(|&c| (c as f64 * inv).powi(2)).sum();
            (1.0 - agree).max(0.0)
        })
        .collect();
    Ok(UncertaintyMap {
        values,
        metric: MetricId::CategoricalVariation,
        rescaled: true,
    })
}

/// Draws `m` segmentations from `g` and measures their per-pixel disagreement.
pub fn sampled_categorical_variation(
    g: &GaussLogitParams,
    m: usize,
    seed: u64,
) -> Result<UncertaintyMap> {
    categorical_variation(&sample_masks(g, m, seed)?, g.classes())
}

/// Mean over classes of the population variance of member probabilities.
/// Returned unscaled; rescale over the evaluation split with [`rescale_maps`].
pub fn intermodel_variance(members: &[ProbTensor]) -> Result<UncertaintyMap> {
    let e = members.len();
    if e < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: e });
    }
    let first = &members[0];
    if members.iter().any(|p| !p.same_shape(first)) {
        return Err(Error::Shape("ensemble members differ in shape".into()));
    }
    let k = first.classes();
    let inv_e = 1.0 / e as f64;
    let values = (0..first.pixels())
        .map(|i| {
            let mut total = 0.0;
            for c in 0..k {
                // shifting by the first member makes identical members exactly 0
                let origin = first.row(i)[c];
                let shifted = |p: &ProbTensor| p.row(i)[c] - origin;
                let mean = members.iter().map(shifted).sum::<f64>() * inv_e;
                let var = members
                    .iter()
                    .map(|p| (shifted(p) - mean).powi(2))
                    .sum::<f64>()
                    * inv_e;
                total += var;
            }
            total / k as f64
        })
        .collect();
    Ok(UncertaintyMap {
        values,
        metric: MetricId::IntermodelVariance,
        rescaled: false,
    })
}

/// Min-max rescaling to `[0, 1]`; a constant input maps to all zeros.
pub fn rescale_unit(values: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = min_max(values.iter())?;
    Ok(values.iter().map(|&v| scale(v, lo, hi)).collect())
}

/// Rescales a set of maps with one global min/max so thresholds are
/// comparable across images.
pub fn rescale_maps(maps: &mut [UncertaintyMap]) -> Result<()> {
    let (lo, hi) = min_max(maps.iter().flat_map(|m| m.values.iter()))?;
    for m in maps.iter_mut() {
        m.values.iter_mut().for_each(|v| *v = scale(*v, lo, hi));
        m.rescaled = true;
    }
    Ok(())
}

fn min_max<'a>(values: impl Iterator<Item = &'a f64>) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::Input(format!("non-finite uncertainty value {v}")));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn probs(rows: &[&[f64]]) -> ProbTensor {
        let k = rows[0].len();
        ProbTensor::new(rows.len(), k, rows.concat()).unwrap()
    }

    #[test]
    fn entropy_extremes() {
        for k in 2..8 {
            let u = normalized_entropy(&probs(&[&vec![1.0 / k as f64; k]])).unwrap();
            assert!((u.values[0] - 1.0).abs() < 1e-12);
            let mut onehot = vec![0.0; k];
            onehot[k - 1] = 1.0;
            assert_eq!(
                normalized_entropy(&probs(&[&onehot])).unwrap().values[0],
                0.0
            );
        }
    }

    #[test]
    fn entropy_of_80_20() {
        // -(0.8 ln 0.8 + 0.2 ln 0.2) / ln 2
        let u = normalized_entropy(&probs(&[&[0.8, 0.2]])).unwrap();
        assert!((u.values[0] - 0.721_928_094_887_362_3).abs() < 1e-12);
    }

    #[test]
    fn entropy_needs_two_classes() {
        let err = normalized_entropy(&probs(&[&[1.0]])).unwrap_err();
        assert!(matches!(err, Error::Undefined(_)));
    }

    #[test]
    fn maxprob_values() {
        assert_eq!(
            maxprob_uncertainty(&probs(&[&[0.0, 1.0]])).unwrap().values[0],
            0.0
        );
        assert_eq!(
            maxprob_uncertainty(&probs(&[&[0.25; 4]])).unwrap().values[0],
            0.75
        );
        let u = maxprob_uncertainty(&probs(&[&[0.6, 0.3, 0.1]])).unwrap();
        assert!((u.values[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn categorical_variation_examples() {
        let agree = vec![vec![1, 2]; 5];
        assert_eq!(
            categorical_variation(&agree, 3).unwrap().values,
            vec![0.0, 0.0]
        );
        let four = vec![vec![0], vec![0], vec![1], vec![2]];
        assert!((categorical_variation(&four, 3).unwrap().values[0] - 0.625).abs() < 1e-15);
        let two = vec![vec![0], vec![1]];
        assert!((categorical_variation(&two, 2).unwrap().values[0] - 0.5).abs() < 1e-15);
        assert!(matches!(
            categorical_variation(&[vec![0]], 2),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn intermodel_variance_examples() {
        let a = probs(&[&[1.0, 0.0]]);
        let b = probs(&[&[0.0, 1.0]]);
        let u = intermodel_variance(&[a.clone(), b]).unwrap();
        assert!((u.values[0] - 0.25).abs() < 1e-15);
        assert!(!u.rescaled);
        let same = intermodel_variance(&[a.clone(), a.clone(), a.clone()]).unwrap();
        let mut maps = vec![same];
        rescale_maps(&mut maps).unwrap();
        assert_eq!(maps[0].values, vec![0.0]);
        assert!(intermodel_variance(&[a]).is_err());
    }

    #[test]
    fn intermodel_variance_ignores_common_shift() {
        let a = probs(&[&[0.7, 0.3], &[0.1, 0.9]]);
        let b = probs(&[&[0.4, 0.6], &[0.5, 0.5]]);
        let base = intermodel_variance(&[a.clone(), b.clone()]).unwrap();
        let shift = |p: &ProbTensor| {
            let d: Vec<f64> = p.data().iter().map(|v| v + 0.125).collect();
            ProbTensor::new(p.pixels(), p.classes(), d).unwrap()
        };
        let shifted = intermodel_variance(&[shift(&a), shift(&b)]).unwrap();
        for (x, y) in base.values.iter().zip(&shifted.values) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale_unit(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(rescale_unit(&[3.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(rescale_unit(&[f64::NAN]).is_err());
    }

    fn dist(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            v.iter().map(|x| (x + 1e-9 / v.len() as f64) / s).collect()
        })
    }

    proptest! {
        #[test]
        fn entropy_and_maxprob_permutation_invariant(row in dist(5), rot in 0usize..5) {
            let mut perm = row.clone();
            perm.rotate_left(rot);
            let a = probs(&[&row]);
            let b = probs(&[&perm]);
            let ea = normalized_entropy(&a).unwrap().values[0];
            let eb = normalized_entropy(&b).unwrap().values[0];
            prop_assert!((ea - eb).abs() < 1e-12);
            let ma = maxprob_uncertainty(&a).unwrap().values[0];
            let mb = maxprob_uncertainty(&b).unwrap().values[0];
            prop_assert_eq!(ma, mb);
        }

        #[test]
        fn rescale_preserves_order(v in prop::collection::vec(-1e3f64..1e3, 2..50)) {
            let r = rescale_unit(&v).unwrap();
            for i in 0..v.len() {
                for j in 0..v.len() {
                    if v[i] < v[j] {
                        prop_assert!(r[i] <= r[j]);
                    }
                }
                prop_assert!((0.0..=1.0).contains(&r[i]));
            }
        }
    }
}

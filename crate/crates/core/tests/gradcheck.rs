mod common;

use common::{grad_instance as instance, max_grad_rel_error, GRAD_SHAPE as SHAPE};
use uqseg::gauss::mc_log_likelihood;
use uqseg::model::{loss_and_grad, HeadKind, Sample};
use uqseg::rng::mix_seed;

fn max_rel_error(kind: HeadKind, seed: u64) -> f64 {
    max_grad_rel_error(kind, seed, 8, 1e-4)
}

#[test]
fn gaussian_head_matches_finite_differences() {
    for seed in 0..3 {
        let e = max_rel_error(HeadKind::Gaussian, seed);
        assert!(e < 1e-4, "seed {seed}: max relative error {e}");
    }
}

#[test]
fn deterministic_head_matches_finite_differences() {
    for seed in 0..3 {
        let e = max_rel_error(HeadKind::Deterministic, seed);
        assert!(e < 1e-4, "seed {seed}: max relative error {e}");
    }
}

#[test]
fn gaussian_loss_is_the_mc_likelihood() {
    let (p, img, labels) = instance(HeadKind::Gaussian, 5);
    let batch = [Sample {
        image: &img,
        labels: &labels,
    }];
    let (loss, _) = loss_and_grad(&p, SHAPE, &batch, 16, 11).unwrap();
    let g = p.forward_gauss(SHAPE, &img).unwrap();
    let ll = mc_log_likelihood(&g, &labels, 16, mix_seed(11, 0)).unwrap();
    assert!((loss + ll / 16.0).abs() < 1e-10, "{loss} vs {}", -ll / 16.0);
}

#[test]
fn collapse_to_cross_entropy() {
    // P = 0 and d at the floor: one sample reproduces softmax cross-entropy.
    let (mut p, img, labels) = instance(HeadKind::Gaussian, 3);
    p.scale_p = 0.0;
    let blocks_d = {
        let f = p.feature_len();
        let k = p.classes;
        (k * (f + 1), 2 * k * (f + 1))
    };
    for w in &mut p.weights[blocks_d.0..blocks_d.1] {
        *w = 0.0;
    }
    // softplus(-800) underflows to 0, leaving only the variance floor
    let f = p.feature_len();
    for o in 0..p.classes {
        p.weights[blocks_d.0 + p.classes * f + o] = -800.0;
    }
    let batch = [Sample {
        image: &img,
        labels: &labels,
    }];
    let (loss, _) = loss_and_grad(&p, SHAPE, &batch, 1, 0).unwrap();
    let g = p.forward_gauss(SHAPE, &img).unwrap();
    let mut ce = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &g.mu()[i * 3..(i + 1) * 3];
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        ce += lse - row[y as usize];
    }
    ce /= 16.0;
    assert!((loss - ce).abs() < 1e-8, "{loss} vs {ce}");
}

#[test]
fn batch_loss_is_mean_of_image_losses() {
    let (p, a, la) = instance(HeadKind::Gaussian, 1);
    let (_, b, lb) = instance(HeadKind::Gaussian, 2);
    let both = loss_and_grad(
        &p,
        SHAPE,
        &[
            Sample {
                image: &a,
                labels: &la,
            },
            Sample {
                image: &b,
                labels: &lb,
            },
        ],
        4,
        7,
    )
    .unwrap()
    .0;
    // image b of the batch draws its noise from mix_seed(7, b)
    let g0 = p.forward_gauss(SHAPE, &a).unwrap();
    let g1 = p.forward_gauss(SHAPE, &b).unwrap();
    let l0 = -mc_log_likelihood(&g0, &la, 4, mix_seed(7, 0)).unwrap() / 16.0;
    let l1 = -mc_log_likelihood(&g1, &lb, 4, mix_seed(7, 1)).unwrap() / 16.0;
    assert!((both - 0.5 * (l0 + l1)).abs() < 1e-12);
}

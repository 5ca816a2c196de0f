mod common;

use common::{compositions, pair_disagreement};
use uqseg::ensemble::{combine_mixture, combine_product};
use uqseg::metrics::{
    categorical_variation, intermodel_variance, maxprob_uncertainty, normalized_entropy,
    rescale_unit,
};
use uqseg::probs::{LogitTensor, ProbTensor};
use uqseg::Error;

#[test]
fn entropy_is_exact_at_both_ends() {
    for k in 2..=12 {
        let uniform = ProbTensor::new(1, k, vec![1.0 / k as f64; k]).unwrap();
        assert_eq!(
            normalized_entropy(&uniform).unwrap().values,
            vec![1.0],
            "K={k}"
        );
        for hot in 0..k {
            let mut row = vec![0.0; k];
            row[hot] = 1.0;
            let p = ProbTensor::new(1, k, row).unwrap();
            assert_eq!(normalized_entropy(&p).unwrap().values, vec![0.0]);
            assert_eq!(maxprob_uncertainty(&p).unwrap().values, vec![0.0]);
        }
    }
    let q = ProbTensor::new(1, 4, vec![0.25; 4]).unwrap();
    assert_eq!(maxprob_uncertainty(&q).unwrap().values, vec![0.75]);
}

#[test]
fn binary_entropy_matches_closed_form() {
    for &p in &[0.01, 0.1, 0.3, 0.5, 0.77] {
        let t = ProbTensor::new(1, 2, vec![p, 1.0 - p]).unwrap();
        let h = -(p * p.log2() + (1.0 - p) * (1.0 - p).log2());
        assert!((normalized_entropy(&t).unwrap().values[0] - h).abs() < 1e-14);
    }
}

#[test]
fn categorical_variation_is_pair_disagreement() {
    for k in 1..=4 {
        for m in 2..=6 {
            for counts in compositions(m, k) {
                let labels: Vec<i32> = counts
                    .iter()
                    .enumerate()
                    .flat_map(|(c, &n)| std::iter::repeat(c as i32).take(n))
                    .collect();
                let masks: Vec<Vec<i32>> = labels.iter().map(|&y| vec![y]).collect();
                let cv = categorical_variation(&masks, k).unwrap().values[0];
                assert!(
                    (cv - pair_disagreement(&labels)).abs() <= 1e-15,
                    "{counts:?}"
                );
            }
        }
    }
}

#[test]
fn single_sample_has_no_variation_estimate() {
    assert!(matches!(
        categorical_variation(&[vec![0, 1]], 2),
        Err(Error::InsufficientSamples { needed: 2, got: 1 })
    ));
}

#[test]
fn identical_members_have_zero_variance() {
    let p = ProbTensor::new(2, 3, vec![0.2, 0.3, 0.5, 0.6, 0.2, 0.2]).unwrap();
    let v = intermodel_variance(&[p.clone(), p.clone(), p]).unwrap();
    assert_eq!(v.values, vec![0.0, 0.0]);
}

#[test]
fn two_member_variance_by_hand() {
    let a = ProbTensor::new(1, 2, vec![1.0, 0.0]).unwrap();
    let b = ProbTensor::new(1, 2, vec![0.0, 1.0]).unwrap();
    // each class has values {0, 1}: population variance 1/4
    assert_eq!(intermodel_variance(&[a, b]).unwrap().values, vec![0.25]);
}

#[test]
fn product_and_mixture_differ_as_expected() {
    let l1 = LogitTensor::new(1, 2, vec![2.0, 0.0]).unwrap();
    let l2 = LogitTensor::new(1, 2, vec![0.0, 0.0]).unwrap();
    let prod = combine_product(&[l1.clone(), l2.clone()]).unwrap();
    let s = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((prod.row(0)[0] - s).abs() < 1e-15);
    let mix = combine_mixture(&[l1.softmax(), l2.softmax()]).unwrap();
    let s2 = 1.0 / (1.0 + (-2.0f64).exp());
    assert!((mix.row(0)[0] - 0.5 * (s2 + 0.5)).abs() < 1e-15);
}

#[test]
fn rescaling_maps_to_unit_interval() {
    assert_eq!(rescale_unit(&[2.0, 4.0, 3.0]).unwrap(), vec![0.0, 1.0, 0.5]);
    assert_eq!(rescale_unit(&[7.0, 7.0]).unwrap(), vec![0.0, 0.0]);
}

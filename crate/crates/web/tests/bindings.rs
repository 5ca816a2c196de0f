use uqseg_web::{corruption_mask, error_detection_curve, SsnDemo};

#[test]
fn mask_has_one_flag_per_pixel() {
    let m = corruption_mask(32, 40, 5.0, 9.0, 3).unwrap();
    assert_eq!(m.len(), 32 * 40);
    assert!(m.iter().all(|&v| v <= 1));
    assert!(m.iter().any(|&v| v == 1));
}

#[test]
fn certain_regions_have_no_variation() {
    let demo = SsnDemo::new(6, 9, 2, 0.0, 1e-9).unwrap();
    let cv = demo.variation(16, 1).unwrap();
    // columns 0..3 and 6..9 are the confident thirds
    for (i, v) in cv.iter().enumerate() {
        if !(3..6).contains(&(i % 9)) {
            assert_eq!(*v, 0.0, "pixel {i}");
        }
    }
    let y = demo.sample(4).unwrap();
    assert_eq!(y[0], 0);
    assert_eq!(y[8], 1);
}

#[test]
fn ambiguous_band_is_uncertain() {
    let demo = SsnDemo::new(4, 9, 2, 2.0, 0.05).unwrap();
    let h = demo.entropy(64, 2).unwrap();
    let cv = demo.variation(64, 2).unwrap();
    // column 4 sits in the middle band, column 0 on the confident left
    assert!(h[4] > h[0]);
    assert!(cv[4] > 0.1);
    assert!(cv[0] < cv[4]);
}

#[test]
fn oracle_uncertainty_detects_every_error() {
    let pts = error_detection_curve(1000, 0.2, 1.0, 5).unwrap();
    // the last point has the highest threshold: only flagged errors remain
    let n = pts.len();
    assert_eq!(pts[n - 1], 1.0);
    assert_eq!(pts[n - 2], 1.0);
}

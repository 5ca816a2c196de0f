use uqseg::dataset::SplitName;
use uqseg::eval::seg_scores;
use uqseg::model::{load_model, save_model, train, HeadKind, TrainConfig};
use uqseg::synth::{generate_dataset, SplitSizes, SynthConfig};
use uqseg::Error;

fn separable(seed: u64) -> SynthConfig {
    SynthConfig {
        classes: 3,
        height: 16,
        width: 16,
        timesteps: 2,
        channels: 2,
        cells_per_image: 4,
        noise_std: 0.05,
        seed,
        ..Default::default()
    }
}

fn det(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 0.05,
        epochs,
        batch_size: 4,
        seed,
        ..Default::default()
    }
}

#[test]
fn separable_data_is_learned() {
    let ds = generate_dataset(
        &separable(1),
        SplitSizes {
            train: 20,
            val: 0,
            test: 10,
        },
    )
    .unwrap();
    let (params, log) = train(&ds.manifest, &ds.train, &det(50, 0)).unwrap();
    assert_eq!(log.epochs.len(), 50);
    let test = ds.split(SplitName::Test).unwrap();
    let shape = ds.manifest.image_shape;
    let mut pred = Vec::new();
    for i in 0..test.len() {
        pred.extend(params.predict(shape, test.image(i), 1, 0).unwrap().labels);
    }
    let s = seg_scores(&pred, &test.labels, shape.pixels(), 3).unwrap();
    assert!(s.accuracy >= 0.99, "accuracy {}", s.accuracy);
}

#[test]
fn zero_epochs_returns_the_initialisation() {
    let ds = generate_dataset(
        &separable(2),
        SplitSizes {
            train: 4,
            val: 0,
            test: 0,
        },
    )
    .unwrap();
    let (a, log) = train(&ds.manifest, &ds.train, &det(0, 3)).unwrap();
    let (b, _) = train(&ds.manifest, &ds.train, &det(0, 3)).unwrap();
    assert!(log.epochs.is_empty());
    assert_eq!(a.weights, b.weights);
    assert!(a.weights.iter().any(|&w| w != 0.0));
}

#[test]
fn loss_mostly_decreases_on_separable_data() {
    let mut monotone = 0;
    for seed in 0..10 {
        let ds = generate_dataset(
            &separable(seed),
            SplitSizes {
                train: 8,
                val: 0,
                test: 0,
            },
        )
        .unwrap();
        let (_, log) = train(&ds.manifest, &ds.train, &det(8, seed)).unwrap();
        let losses: Vec<f64> = log.epochs.iter().map(|e| e.loss).collect();
        if losses.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    assert!(monotone >= 9, "{monotone}/10 seeds monotone");
}

#[test]
fn gaussian_head_trains_and_round_trips() {
    let ds = generate_dataset(
        &separable(4),
        SplitSizes {
            train: 6,
            val: 0,
            test: 0,
        },
    )
    .unwrap();
    let cfg = TrainConfig {
        head: HeadKind::Gaussian,
        lr: 0.01,
        epochs: 2,
        batch_size: 3,
        m_train: 4,
        rank: 2,
        ..Default::default()
    };
    let (params, log) = train(&ds.manifest, &ds.train, &cfg).unwrap();
    assert!(log.epochs.iter().all(|e| e.loss.is_finite()));
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &params).unwrap();
    let back = load_model(dir.path()).unwrap();
    assert_eq!(back, params);
    let img = ds.train.image(0);
    let shape = ds.manifest.image_shape;
    assert_eq!(
        back.predict(shape, img, 8, 1).unwrap().probs,
        params.predict(shape, img, 8, 1).unwrap().probs
    );
}

#[test]
fn training_is_reproducible() {
    let ds = generate_dataset(
        &separable(5),
        SplitSizes {
            train: 6,
            val: 0,
            test: 0,
        },
    )
    .unwrap();
    let a = train(&ds.manifest, &ds.train, &det(3, 9)).unwrap();
    let b = train(&ds.manifest, &ds.train, &det(3, 9)).unwrap();
    assert_eq!(a.0.weights, b.0.weights);
    assert_eq!(a.1, b.1);
}

#[test]
fn invalid_config_is_rejected() {
    let ds = generate_dataset(
        &separable(6),
        SplitSizes {
            train: 2,
            val: 0,
            test: 0,
        },
    )
    .unwrap();
    let bad = TrainConfig {
        lr: -1.0,
        ..Default::default()
    };
    assert!(matches!(
        train(&ds.manifest, &ds.train, &bad),
        Err(Error::Config(_))
    ));
}

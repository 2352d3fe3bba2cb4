//! Supervised-training smoke tests on a separable two-class toy set, plus
//! the determinism and degenerate-config contracts.

use fda_core::attacks::{AttackBudget, AttackConfig, AttackMethod};
use fda_core::models::{
    build_model, evaluate_accuracy, train, Architecture, LabeledImages, LayerSpec, TrainConfig,
    TrainError,
};
use fda_core::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_arch() -> Architecture {
    Architecture {
        layers: vec![
            LayerSpec::Conv {
                kh: 3,
                kw: 3,
                out_channels: 4,
                stride: 1,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { out_units: 2 },
        ],
        input_shape: (8, 8, 1),
        num_classes: 2,
    }
}

/// Two classes: a bright blob in the top-left corner vs the bottom-right,
/// plus pixel noise. Linearly separable with huge margin.
fn toy_dataset(count: usize, seed: u64) -> LabeledImages<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 2;
        let image = Tensor::from_fn(vec![8, 8, 1], |p| {
            let (r, c) = (p / 8, p % 8);
            let lit = if label == 0 { r < 4 && c < 4 } else { r >= 4 && c >= 4 };
            let base: f32 = if lit { 0.85 } else { 0.1 };
            (base + rng.random::<f32>() * 0.1).clamp(0.0, 1.0)
        });
        images.push(image);
        labels.push(label);
    }
    LabeledImages::new(images, labels)
}

#[test]
fn toy_set_reaches_95_percent_training_accuracy_in_5_epochs() {
    let mut model = build_model::<f32>(toy_arch(), 0).unwrap();
    let data = toy_dataset(200, 1);
    let config = TrainConfig::new(5, 16, 0.05, 2);
    let history = train(&mut model, &data, &config).unwrap();
    assert_eq!(history.len(), 5);
    let last = history.last().unwrap();
    assert!(
        last.train_accuracy >= 0.95,
        "training accuracy {}",
        last.train_accuracy
    );
    assert!(last.adv_accuracy.is_none());
    let report = evaluate_accuracy(&model, &data, 2).unwrap();
    assert_eq!(report.topk, 1.0, "top-k with k = classes is always 1");
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let mut model = build_model::<f32>(toy_arch(), 3).unwrap();
    let before: Vec<Vec<f32>> = model.params().iter().map(|p| p.tensor.data().to_vec()).collect();
    let data = toy_dataset(32, 4);
    let config = TrainConfig::new(2, 8, 0.0, 5);
    train(&mut model, &data, &config).unwrap();
    for (p, b) in model.params().iter().zip(&before) {
        assert_eq!(p.tensor.data(), &b[..], "{}", p.name);
    }
}

#[test]
fn same_seed_gives_identical_history() {
    let data = toy_dataset(64, 6);
    let config = TrainConfig::new(2, 8, 0.05, 7);

    let mut m1 = build_model::<f32>(toy_arch(), 8).unwrap();
    let h1 = train(&mut m1, &data, &config).unwrap();
    let mut m2 = build_model::<f32>(toy_arch(), 8).unwrap();
    let h2 = train(&mut m2, &data, &config).unwrap();

    assert_eq!(h1, h2);
    for (a, b) in m1.params().iter().zip(m2.params()) {
        assert_eq!(a.tensor.data(), b.tensor.data());
    }
}

#[test]
fn empty_dataset_is_rejected() {
    let mut model = build_model::<f32>(toy_arch(), 0).unwrap();
    let data = LabeledImages::<f32>::new(vec![], vec![]);
    assert!(matches!(
        train(&mut model, &data, &TrainConfig::new(1, 8, 0.1, 0)),
        Err(TrainError::EmptyDataset)
    ));
}

#[test]
fn out_of_range_label_is_rejected() {
    let mut model = build_model::<f32>(toy_arch(), 0).unwrap();
    let mut data = toy_dataset(8, 9);
    data.labels[3] = 2;
    assert!(matches!(
        train(&mut model, &data, &TrainConfig::new(1, 8, 0.1, 0)),
        Err(TrainError::LabelOutOfRange {
            index: 3,
            label: 2,
            classes: 2
        })
    ));
}

#[test]
fn adversarial_training_records_adversarial_accuracy() {
    let mut model = build_model::<f32>(toy_arch(), 10).unwrap();
    let data = toy_dataset(32, 11);
    let mut config = TrainConfig::new(1, 8, 0.05, 12);
    config.adversarial = Some(AttackConfig::new(
        AttackMethod::PgdMl,
        AttackBudget::new(8.0, 3, 2.0),
    ));
    let history = train(&mut model, &data, &config).unwrap();
    assert!(history[0].adv_accuracy.is_some());
}

#[test]
fn random_weight_model_scores_chance_level_on_balanced_data() {
    // Statistical oracle over seeds: mean top-1 of untrained models on
    // balanced 10-class data sits at 0.1 +/- 0.05.
    let arch = Architecture {
        layers: vec![
            LayerSpec::Conv {
                kh: 3,
                kw: 3,
                out_channels: 4,
                stride: 1,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { out_units: 10 },
        ],
        input_shape: (6, 6, 1),
        num_classes: 10,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let count = 400;
    let images: Vec<Tensor<f32>> = (0..count)
        .map(|_| Tensor::from_fn(vec![6, 6, 1], |_| rng.random::<f32>()))
        .collect();
    let labels: Vec<usize> = (0..count).map(|i| i % 10).collect();
    let data = LabeledImages::new(images, labels);

    let mut total = 0.0;
    let seeds = 6;
    for seed in 0..seeds {
        let model = build_model::<f32>(arch.clone(), 100 + seed).unwrap();
        total += evaluate_accuracy(&model, &data, 1).unwrap().top1;
    }
    let mean = total / seeds as f64;
    assert!(
        (mean - 0.1).abs() <= 0.05,
        "mean chance-level accuracy {mean}"
    );
}

// The non-finite-loss guard is only reachable in release builds; in debug
// builds the tape's finiteness assertion fires first, by design.
#[cfg(not(debug_assertions))]
#[test]
fn exploding_training_reports_non_finite_loss() {
    let mut model = build_model::<f32>(toy_arch(), 14).unwrap();
    let data = toy_dataset(64, 15);
    let config = TrainConfig::new(50, 8, 1e12, 16);
    match train(&mut model, &data, &config) {
        Err(TrainError::NonFiniteLoss { .. }) => {}
        other => panic!("expected NonFiniteLoss, got {other:?}"),
    }
}

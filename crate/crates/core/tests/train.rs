use std::path::Path;

use gcnn::data::{load_amat, LabeledDataset};
use gcnn::model::{build_model, LayerGraph};
use gcnn::train::{batch, evaluate, train, EpochMetrics, OptimizerState, TrainConfig};

fn fixture(n: usize) -> LabeledDataset {
    load_amat(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/rotmnist_proxy_4000.amat.gz"))
        .unwrap()
        .slice(0, n)
        .unwrap()
}

fn run(name: &str, data: &LabeledDataset, config: &TrainConfig) -> (Vec<EpochMetrics>, LayerGraph<f32>) {
    let mut model = build_model::<f32>(name, config.seed).unwrap();
    let mut opt = OptimizerState::new(&model, config.adam());
    let log = train(&mut model, &mut opt, data, Some(data), config, |_, _, _| Ok(())).unwrap();
    assert_eq!(opt.t as usize, config.epochs * data.len().div_ceil(config.batch_size));
    (log, model)
}

#[test]
fn loss_falls_and_runs_repeat_exactly() {
    let data = fixture(96);
    let config = TrainConfig {
        epochs: 3,
        batch_size: 32,
        seed: 7,
        ..TrainConfig::default()
    };
    let (log, model) = run("p4cnn_rp", &data, &config);
    assert_eq!(log.len(), 3);
    assert!(log[2].train_loss < log[0].train_loss, "{log:?}");
    assert!(log.iter().all(|m| m.valid_error.is_some_and(|e| (0.0..=1.0).contains(&e))));

    let (again, same) = run("p4cnn_rp", &data, &config);
    assert_eq!(log, again);
    assert_eq!(model.tensors(), same.tensors());

    let other = TrainConfig { seed: 8, ..config };
    let (_, different) = run("p4cnn_rp", &data, &other);
    assert_ne!(model.tensors(), different.tensors());
}

#[test]
fn learning_rate_schedule_is_applied() {
    let data = fixture(16);
    let config = TrainConfig {
        epochs: 3,
        batch_size: 16,
        lr_milestones: vec![1, 2],
        ..TrainConfig::default()
    };
    let (log, _) = run("z2cnn", &data, &config);
    let lrs: Vec<f64> = log.iter().map(|m| m.lr).collect();
    assert_eq!(lrs[0], 1e-3);
    assert!((lrs[1] - 1e-4).abs() < 1e-15 && (lrs[2] - 1e-5).abs() < 1e-15, "{lrs:?}");
}

#[test]
fn evaluate_counts_mistakes() {
    let data = fixture(40);
    let mut model = build_model::<f32>("z2cnn", 3).unwrap();
    let indices: Vec<usize> = (0..data.len()).collect();
    let (images, _) = batch::<f32>(&data, &indices);
    let predicted = model.predict(&images).unwrap();

    let pixels: Vec<f32> = (0..data.len()).flat_map(|i| data.pixels(i).to_vec()).collect();
    let agree: Vec<u8> = predicted.iter().map(|&p| p as u8).collect();
    let agree = LabeledDataset::new(pixels.clone(), agree).unwrap();
    assert_eq!(evaluate(&mut model, &agree, 7).unwrap(), 0.0);

    let mut labels: Vec<u8> = predicted.iter().map(|&p| p as u8).collect();
    for l in labels.iter_mut().take(10) {
        *l = (*l + 1) % 10;
    }
    let off = LabeledDataset::new(pixels, labels).unwrap();
    assert_eq!(evaluate(&mut model, &off, 7).unwrap(), 0.25);
}

#[test]
fn zero_batch_size_is_rejected() {
    let data = fixture(4);
    let mut model = build_model::<f32>("z2cnn", 0).unwrap();
    let config = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    let mut opt = OptimizerState::new(&model, config.adam());
    assert!(train(&mut model, &mut opt, &data, None, &config, |_, _, _| Ok(())).is_err());
}

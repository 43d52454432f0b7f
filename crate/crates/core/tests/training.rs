use headsmith_core::nnet::{self, ArchitectureSpec, LayerSpec, Matrix, TrainConfig, TrainedModel};
use headsmith_core::synth::{gaussian_blobs, BlobConfig};
use headsmith_core::FeatureMatrix;

fn blobs(seed: u64) -> (FeatureMatrix, FeatureMatrix) {
    let data = gaussian_blobs(&BlobConfig {
        samples: 300,
        features: 8,
        patients: 30,
        separation: 3.0,
        seed,
        ..BlobConfig::default()
    })
    .unwrap();
    let idx: Vec<usize> = (0..data.len()).collect();
    let (tr, va): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|i| i % 4 != 0);
    (data.select_rows(&tr), data.select_rows(&va))
}

fn mlp(width: usize) -> ArchitectureSpec {
    use LayerSpec::*;
    ArchitectureSpec::new(
        width,
        5,
        vec![Input, MultiCategoryEncoding, Normalization, Dense { units: 16 }, BatchNorm, Relu, Dropout { rate: 0.25 }, Dense { units: 5 }, Softmax],
    )
    .unwrap()
}

fn matrix(data: &FeatureMatrix) -> Matrix {
    Matrix::from_vec(data.len(), data.width(), data.values().to_vec()).unwrap()
}

/// Nearest class mean, fitted on `train`.
fn nearest_centroid_accuracy(train: &FeatureMatrix, test: &FeatureMatrix) -> f64 {
    let k = 5;
    let mut means = vec![vec![0.0; train.width()]; k];
    let mut counts = vec![0.0; k];
    for (row, &y) in train.rows().zip(train.labels()) {
        counts[y] += 1.0;
        for (m, x) in means[y].iter_mut().zip(row) {
            *m += x;
        }
    }
    for (m, c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c);
    }
    let correct = test
        .rows()
        .zip(test.labels())
        .filter(|(row, &y)| {
            let dist = |m: &Vec<f64>| m.iter().zip(row.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            (0..k).min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b]))).unwrap() == y
        })
        .count();
    correct as f64 / test.len() as f64
}

#[test]
fn learns_separable_blobs() {
    let (train, val) = blobs(1);
    assert!(nearest_centroid_accuracy(&train, &val) >= 0.99);
    let cfg = TrainConfig {
        max_epochs: 30,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let out = nnet::train(&mlp(8), &train, &val, &cfg, 3).unwrap();
    let acc = nnet::accuracy(&out.model, &val).unwrap();
    assert!(acc >= 0.95, "validation accuracy {acc}");
    assert_eq!(out.best_val_accuracy, Some(acc));
}

#[test]
fn zero_epochs_returns_initial_model() {
    let (train, val) = blobs(2);
    let cfg = TrainConfig {
        max_epochs: 0,
        ..TrainConfig::default()
    };
    let out = nnet::train(&mlp(8), &train, &val, &cfg, 9).unwrap();
    let mut init = TrainedModel::initialize(mlp(8), cfg.clone(), 9).unwrap();
    init.adapt_normalization(&matrix(&train)).unwrap();
    assert_eq!(out.model, init);
    assert!(out.history.is_empty());
    assert_eq!(out.best_epoch, 0);
    assert_eq!(out.best_val_accuracy, None);
}

#[test]
fn training_is_deterministic_per_seed() {
    let (train, val) = blobs(3);
    let cfg = TrainConfig {
        max_epochs: 4,
        ..TrainConfig::default()
    };
    let a = nnet::train(&mlp(8), &train, &val, &cfg, 5).unwrap();
    let b = nnet::train(&mlp(8), &train, &val, &cfg, 5).unwrap();
    let c = nnet::train(&mlp(8), &train, &val, &cfg, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.model, c.model);
}

#[test]
fn history_length_laws() {
    let (train, val) = blobs(4);
    for (epochs, patience) in [(1, 5), (6, 1), (12, 2), (20, 3)] {
        let cfg = TrainConfig {
            max_epochs: epochs,
            patience,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let out = nnet::train(&mlp(8), &train, &val, &cfg, 8).unwrap();
        let n = out.history.len();
        assert!(n >= 1 && n <= epochs);
        assert!(out.best_epoch >= 1 && out.best_epoch <= n);
        let best = out.history.iter().map(|r| r.val_accuracy).fold(f64::MIN, f64::max);
        assert_eq!(out.history[out.best_epoch - 1].val_accuracy, best);
        // The best epoch is the first one reaching the maximum.
        assert!(out.history[..out.best_epoch - 1].iter().all(|r| r.val_accuracy < best));
        if n < epochs {
            assert_eq!(n, out.best_epoch + patience, "stopped early without exhausting patience");
        }
        for (i, r) in out.history.iter().enumerate() {
            assert_eq!(r.epoch, i + 1);
        }
    }
}

#[test]
fn saved_model_predicts_identically() {
    let (train, val) = blobs(5);
    let cfg = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let out = nnet::train(&mlp(8), &train, &val, &cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    out.model.save(&path).unwrap();
    let loaded = TrainedModel::load(&path).unwrap();
    let x = matrix(&val);
    assert_eq!(loaded.predict_proba(&x).unwrap(), out.model.predict_proba(&x).unwrap());
}

#[test]
fn rejects_mismatched_inputs() {
    let (train, val) = blobs(6);
    let cfg = TrainConfig::default();
    assert!(nnet::train(&mlp(7), &train, &val, &cfg, 0).is_err());
    let narrow = ArchitectureSpec::new(
        8,
        3,
        vec![LayerSpec::Input, LayerSpec::MultiCategoryEncoding, LayerSpec::Dense { units: 3 }, LayerSpec::Softmax],
    )
    .unwrap();
    assert!(nnet::train(&narrow, &train, &val, &cfg, 0).is_err());
}

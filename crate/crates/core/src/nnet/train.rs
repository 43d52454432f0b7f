use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::model::{cross_entropy, Mode, TrainedModel};
use super::spec::ArchitectureSpec;
use crate::data::FeatureMatrix;
use crate::error::{arg_err, shape_err, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopMetric {
    #[default]
    ValAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub early_stop_metric: EarlyStopMetric,
    /// Epochs without a strict improvement in validation accuracy before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 25,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            early_stop_metric: EarlyStopMetric::ValAccuracy,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(arg_err!("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(arg_err!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(arg_err!("adam {name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(arg_err!("adam epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Weights from the epoch with the highest validation accuracy.
    pub model: TrainedModel,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch the weights come from; 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }
}

/// Renders a history as CSV with header `epoch,train_loss,val_accuracy`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_accuracy\n");
    for r in history {
        let _ = writeln!(out, "{},{:?},{:?}", r.epoch, r.train_loss, r.val_accuracy);
    }
    out
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    crate::io::write_atomic(path, history_csv(history).as_bytes())
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &mut TrainedModel) -> Self {
        let sizes: Vec<usize> = model.trainable_params_mut().iter().map(|p| p.len()).collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
            }
        }
    }
}

fn to_matrix(data: &FeatureMatrix) -> Matrix {
    Matrix::from_vec(data.len(), data.width(), data.values().to_vec()).expect("feature matrix is rectangular")
}

fn check_split(name: &str, data: &FeatureMatrix, spec: &ArchitectureSpec) -> Result<()> {
    if data.is_empty() {
        return Err(arg_err!("{name} split is empty"));
    }
    if data.width() != spec.input_width {
        return Err(shape_err!(
            "{name} split has {} features, architecture expects {}",
            data.width(),
            spec.input_width
        ));
    }
    if let Some(&y) = data.labels().iter().find(|&&y| y >= spec.num_classes) {
        return Err(arg_err!("{name} label {y} out of range for {} classes", spec.num_classes));
    }
    Ok(())
}

/// Fraction of rows of `data` whose argmax prediction equals the label.
pub fn accuracy(model: &TrainedModel, data: &FeatureMatrix) -> Result<f64> {
    let pred = model.predict(&to_matrix(data))?;
    let correct = pred.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / data.len() as f64)
}

/// Mini-batch Adam on categorical cross-entropy, with early stopping on
/// validation accuracy and restoration of the best epoch's weights.
///
/// All randomness (initialization, shuffling, dropout) is derived from `seed`.
pub fn train(
    spec: &ArchitectureSpec,
    train_set: &FeatureMatrix,
    val_set: &FeatureMatrix,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    spec.validate()?;
    config.validate()?;
    check_split("training", train_set, spec)?;
    check_split("validation", val_set, spec)?;

    let x_train = to_matrix(train_set);
    let mut model = TrainedModel::initialize(spec.clone(), config.clone(), seed)?;
    model.adapt_normalization(&x_train)?;

    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_acc: Option<f64> = None;
    let mut history = Vec::new();
    let mut adam = Adam::new(&mut model);
    let mut rng = SplitMix64::new(derive_seed(seed, 1));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut xb = Matrix::zeros(chunk.len(), x_train.cols());
            for (r, &i) in chunk.iter().enumerate() {
                xb.row_mut(r).copy_from_slice(x_train.row(i));
            }
            let yb: Vec<usize> = chunk.iter().map(|&i| train_set.labels()[i]).collect();
            let trace = model.forward(&xb, Mode::Train, &mut rng)?;
            loss_sum += cross_entropy(trace.output(), &yb) * chunk.len() as f64;
            let grads = model.backward_cross_entropy(&trace, &yb)?;
            model.apply_batch_statistics(&trace);
            adam.update(model.trainable_params_mut(), grads.slices(), config);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_accuracy = accuracy(&model, val_set)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });
        log::debug!("epoch {epoch}: loss {train_loss:.4}, val acc {val_accuracy:.4}");

        if best_acc.map_or(true, |b| val_accuracy > b) {
            best_acc = Some(val_accuracy);
            best = model.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
        best_val_accuracy: best_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::LayerSpec::*;

    #[test]
    fn history_csv_header() {
        let h = vec![EpochRecord { epoch: 1, train_loss: 0.5, val_accuracy: 0.75 }];
        assert_eq!(history_csv(&h), "epoch,train_loss,val_accuracy\n1,0.5,0.75\n");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.batch_size = 0));
        assert!(bad(|c| c.learning_rate = 0.0));
        assert!(bad(|c| c.adam_beta1 = 1.0));
        assert!(bad(|c| c.adam_beta2 = 0.0));
        assert!(bad(|c| c.adam_epsilon = 0.0));
    }

    #[test]
    fn config_json_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"max_epochs": 3}"#).unwrap();
        assert_eq!(c.max_epochs, 3);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.early_stop_metric, EarlyStopMetric::ValAccuracy);
    }

    #[test]
    fn rejects_bad_labels_and_widths() {
        let spec = ArchitectureSpec::new(2, 2, vec![Input, Dense { units: 2 }, Softmax]).unwrap();
        let ok = FeatureMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0, 1]).unwrap();
        let bad_label = FeatureMatrix::from_rows(vec![vec![0.0, 1.0]], vec![2]).unwrap();
        let wide = FeatureMatrix::from_rows(vec![vec![0.0, 1.0, 2.0]], vec![0]).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(train(&spec, &bad_label, &ok, &cfg, 0), Err(crate::error::Error::Argument(_))));
        assert!(matches!(train(&spec, &ok, &wide, &cfg, 0), Err(crate::error::Error::Shape(_))));
    }
}

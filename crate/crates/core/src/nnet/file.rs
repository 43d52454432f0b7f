//! JSON model files.
//!
//! ```text
//! {
//!   "spec": [{"kind": "input"}, ..., {"kind": "softmax"}],
//!   "input_width": 62,
//!   "num_classes": 5,
//!   "weights": [{"kernel": [[...], ...], "bias": [...]}, ...],   // dense layers in order, kernel out x in
//!   "stats": {
//!     "normalization": [{"mean": [...], "variance": [...], "count": 350}],
//!     "batch_norm": [{"gamma": [...], "beta": [...], "moving_mean": [...], "moving_variance": [...]}]
//!   },
//!   "config": {...},
//!   "seed": 7
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::model::{LayerState, TrainedModel};
use super::spec::{ArchitectureSpec, LayerSpec};
use super::train::TrainConfig;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DenseWeights {
    kernel: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NormalizationStats {
    mean: Vec<f64>,
    variance: Vec<f64>,
    count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BatchNormStats {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    moving_mean: Vec<f64>,
    moving_variance: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Stats {
    normalization: Vec<NormalizationStats>,
    batch_norm: Vec<BatchNormStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    spec: Vec<LayerSpec>,
    input_width: usize,
    num_classes: usize,
    weights: Vec<DenseWeights>,
    stats: Stats,
    config: TrainConfig,
    seed: u64,
}

impl From<&TrainedModel> for ModelFile {
    fn from(m: &TrainedModel) -> Self {
        let mut weights = Vec::new();
        let mut stats = Stats::default();
        for state in &m.layers {
            match state {
                LayerState::Dense { weights: w, bias } => weights.push(DenseWeights {
                    kernel: w.to_rows(),
                    bias: bias.clone(),
                }),
                LayerState::Normalization { mean, variance, count } => stats.normalization.push(NormalizationStats {
                    mean: mean.clone(),
                    variance: variance.clone(),
                    count: *count,
                }),
                LayerState::BatchNorm { gamma, beta, moving_mean, moving_variance } => stats.batch_norm.push(BatchNormStats {
                    gamma: gamma.clone(),
                    beta: beta.clone(),
                    moving_mean: moving_mean.clone(),
                    moving_variance: moving_variance.clone(),
                }),
                LayerState::Stateless => {}
            }
        }
        ModelFile {
            spec: m.spec.layers.clone(),
            input_width: m.spec.input_width,
            num_classes: m.spec.num_classes,
            weights,
            stats,
            config: m.config.clone(),
            seed: m.seed,
        }
    }
}

impl TryFrom<ModelFile> for TrainedModel {
    type Error = crate::error::Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let spec = ArchitectureSpec::new(f.input_width, f.num_classes, f.spec)?;
        let mut dense = f.weights.into_iter();
        let mut norm = f.stats.normalization.into_iter();
        let mut bn = f.stats.batch_norm.into_iter();
        let missing = |what: &str, i: usize| shape_err!("model file lacks {what} for layer {i}");
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            layers.push(match layer {
                LayerSpec::Dense { .. } => {
                    let d = dense.next().ok_or_else(|| missing("dense weights", i))?;
                    LayerState::Dense {
                        weights: Matrix::from_rows(&d.kernel)?,
                        bias: d.bias,
                    }
                }
                LayerSpec::Normalization => {
                    let n = norm.next().ok_or_else(|| missing("normalization statistics", i))?;
                    LayerState::Normalization {
                        mean: n.mean,
                        variance: n.variance,
                        count: n.count,
                    }
                }
                LayerSpec::BatchNorm => {
                    let b = bn.next().ok_or_else(|| missing("batch-norm statistics", i))?;
                    LayerState::BatchNorm {
                        gamma: b.gamma,
                        beta: b.beta,
                        moving_mean: b.moving_mean,
                        moving_variance: b.moving_variance,
                    }
                }
                _ => LayerState::Stateless,
            });
        }
        if dense.next().is_some() || norm.next().is_some() || bn.next().is_some() {
            return Err(shape_err!("model file has more parameter blocks than layers"));
        }
        let model = TrainedModel {
            spec,
            layers,
            config: f.config,
            seed: f.seed,
        };
        model.validate()?;
        Ok(model)
    }
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(text)?.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, &ModelFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json::<ModelFile>(path)?.try_into()
    }
}

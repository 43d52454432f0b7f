//! Budget-bounded architecture search over dense classifier heads.
//!
//! Candidates follow the grammar
//!
//! ```text
//! input -> multi_category_encoding -> [normalization]
//!       -> block{1..3} -> dense(K) -> softmax
//! block := dense(units) -> [batch_norm] -> relu -> [dropout(rate)]
//! ```
//!
//! and are drawn by seeded uniform random search. Every trial gets its own
//! seed derived from the search seed and the trial index, so results do not
//! depend on how many trials run concurrently.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{arg_err, shape_err, Error, Result};
use crate::nnet::{self, ArchitectureSpec, LayerSpec, TrainConfig, TrainOutcome, TrainedModel};
use crate::rng::{derive_seed, SplitMix64};

pub const DEFAULT_MAX_TRIALS: usize = 55;
pub const DEFAULT_MAX_EPOCHS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub use_normalization: Vec<bool>,
    pub num_blocks: Vec<usize>,
    pub units: Vec<usize>,
    pub use_batch_norm: Vec<bool>,
    /// A rate of 0 means the block has no dropout layer.
    pub dropout_rates: Vec<f64>,
    pub learning_rates: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            use_normalization: vec![true, false],
            num_blocks: vec![1, 2, 3],
            units: vec![16, 32, 64, 128, 256, 512, 1024],
            use_batch_norm: vec![true, false],
            dropout_rates: vec![0.0, 0.25, 0.5],
            learning_rates: vec![1e-2, 1e-3, 1e-4],
        }
    }
}

/// A sampled point: an architecture plus its optimizer learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub architecture: ArchitectureSpec,
    pub learning_rate: f64,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.use_normalization.is_empty()
            || self.num_blocks.is_empty()
            || self.units.is_empty()
            || self.use_batch_norm.is_empty()
            || self.dropout_rates.is_empty()
            || self.learning_rates.is_empty()
        {
            return Err(Error::Config("every search-space dimension needs at least one choice".into()));
        }
        if self.num_blocks.contains(&0) || self.units.contains(&0) {
            return Err(Error::Config("block counts and unit counts must be positive".into()));
        }
        if self.dropout_rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::Config("dropout rates must lie in [0, 1)".into()));
        }
        if self.learning_rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_candidate(&self, input_width: usize, num_classes: usize, rng: &mut SplitMix64) -> Result<Candidate> {
        if input_width == 0 {
            return Err(arg_err!("input width must be positive"));
        }
        if num_classes < 2 {
            return Err(arg_err!("need at least 2 classes, got {num_classes}"));
        }
        let mut layers = vec![LayerSpec::Input, LayerSpec::MultiCategoryEncoding];
        if *rng.choose(&self.use_normalization) {
            layers.push(LayerSpec::Normalization);
        }
        let blocks = *rng.choose(&self.num_blocks);
        for _ in 0..blocks {
            layers.push(LayerSpec::Dense { units: *rng.choose(&self.units) });
            if *rng.choose(&self.use_batch_norm) {
                layers.push(LayerSpec::BatchNorm);
            }
            layers.push(LayerSpec::Relu);
            let rate = *rng.choose(&self.dropout_rates);
            if rate > 0.0 {
                layers.push(LayerSpec::Dropout { rate });
            }
        }
        layers.push(LayerSpec::Dense { units: num_classes });
        layers.push(LayerSpec::Softmax);
        let learning_rate = *rng.choose(&self.learning_rates);
        Ok(Candidate {
            architecture: ArchitectureSpec::new(input_width, num_classes, layers)?,
            learning_rate,
        })
    }

    /// Whether `spec` can be produced by this space's grammar.
    pub fn admits(&self, spec: &ArchitectureSpec) -> bool {
        if spec.validate().is_err() {
            return false;
        }
        let l = &spec.layers;
        if l.len() < 2 || l[1] != LayerSpec::MultiCategoryEncoding {
            return false;
        }
        let mut i = 2;
        let has_norm = l[i] == LayerSpec::Normalization;
        if has_norm {
            i += 1;
        }
        if !self.use_normalization.contains(&has_norm) {
            return false;
        }
        let head = l.len() - 2;
        let mut blocks = 0;
        while i < head {
            let LayerSpec::Dense { units } = l[i] else { return false };
            if !self.units.contains(&units) {
                return false;
            }
            i += 1;
            let bn = l.get(i) == Some(&LayerSpec::BatchNorm);
            if bn {
                i += 1;
            }
            if !self.use_batch_norm.contains(&bn) || l.get(i) != Some(&LayerSpec::Relu) {
                return false;
            }
            i += 1;
            let rate = match l.get(i) {
                Some(LayerSpec::Dropout { rate }) if i < head => {
                    i += 1;
                    *rate
                }
                _ => 0.0,
            };
            if !self.dropout_rates.contains(&rate) {
                return false;
            }
            blocks += 1;
        }
        i == head && self.num_blocks.contains(&blocks)
    }
}

/// Samples one architecture from `space`.
pub fn sample_architecture(
    space: &SearchSpace,
    input_width: usize,
    num_classes: usize,
    rng: &mut SplitMix64,
) -> Result<ArchitectureSpec> {
    Ok(space.sample_candidate(input_width, num_classes, rng)?.architecture)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Random,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            other => Err(Error::Config(format!("unknown search strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub max_trials: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Trials trained concurrently.
    pub parallel: usize,
    pub batch_size: usize,
    /// Epoch-level early-stopping patience inside each trial.
    pub patience: usize,
    /// Stop the search after this many consecutive trials without a new best.
    pub stop_after_non_improving: Option<usize>,
    pub strategy: Strategy,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_trials: DEFAULT_MAX_TRIALS,
            max_epochs: DEFAULT_MAX_EPOCHS,
            seed: 0,
            parallel: 1,
            batch_size: TrainConfig::default().batch_size,
            patience: TrainConfig::default().patience,
            stop_after_non_improving: None,
            strategy: Strategy::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub architecture: ArchitectureSpec,
    pub config: TrainConfig,
    pub seed: u64,
    pub val_accuracy: f64,
    pub epochs_run: usize,
    /// Wall-clock seconds. Not serialized, so search logs stay reproducible.
    #[serde(skip_serializing, default)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub trials: Vec<TrialRecord>,
    pub best_trial_index: usize,
    pub best_model: TrainedModel,
}

impl SearchResult {
    pub fn best_trial(&self) -> &TrialRecord {
        &self.trials[self.best_trial_index]
    }

    /// Equality ignoring wall-clock timings.
    pub fn same_outcome(&self, other: &SearchResult) -> bool {
        self.best_trial_index == other.best_trial_index
            && self.best_model == other.best_model
            && self.trials.len() == other.trials.len()
            && self.trials.iter().zip(&other.trials).all(|(a, b)| TrialRecord { wall_time: b.wall_time, ..a.clone() } == *b)
    }

    /// One JSON document per line, in trial order.
    pub fn trials_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for t in &self.trials {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Position of the highest validation accuracy, lowest index on ties.
pub fn select_best(trials: &[TrialRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in trials.iter().enumerate() {
        if best.map_or(true, |b| t.val_accuracy > trials[b].val_accuracy) {
            best = Some(i);
        }
    }
    best
}

/// Inputs to a single trial.
pub struct TrialJob<'a> {
    pub index: usize,
    pub seed: u64,
    pub architecture: &'a ArchitectureSpec,
    pub config: &'a TrainConfig,
    pub train: &'a FeatureMatrix,
    pub val: &'a FeatureMatrix,
}

fn default_trainer(job: &TrialJob<'_>) -> Result<TrainOutcome> {
    nnet::train(job.architecture, job.train, job.val, job.config, job.seed)
}

/// Number of classes implied by the labels of both splits.
fn infer_num_classes(train: &FeatureMatrix, val: &FeatureMatrix) -> Result<usize> {
    let k = train.labels().iter().max().map_or(0, |m| m + 1);
    if let Some(&y) = val.labels().iter().find(|&&y| y >= k) {
        return Err(Error::Data(format!("validation label {y} never occurs in the training split")));
    }
    Ok(k)
}

/// Random search with the real training loop.
pub fn search(train: &FeatureMatrix, val: &FeatureMatrix, space: &SearchSpace, config: &SearchConfig) -> Result<SearchResult> {
    search_with_trainer(train, val, space, config, default_trainer)
}

/// [`search`] with a caller-supplied trial trainer (used for instrumentation).
pub fn search_with_trainer<F>(
    train: &FeatureMatrix,
    val: &FeatureMatrix,
    space: &SearchSpace,
    config: &SearchConfig,
    trainer: F,
) -> Result<SearchResult>
where
    F: Fn(&TrialJob<'_>) -> Result<TrainOutcome> + Sync,
{
    if config.max_trials == 0 {
        return Err(arg_err!("max_trials must be at least 1"));
    }
    if train.is_empty() || val.is_empty() {
        return Err(arg_err!("search needs non-empty training and validation splits"));
    }
    if train.width() != val.width() {
        return Err(shape_err!("training width {} differs from validation width {}", train.width(), val.width()));
    }
    space.validate()?;
    let num_classes = infer_num_classes(train, val)?;
    if num_classes < 2 {
        return Err(Error::Data("search needs at least 2 classes".into()));
    }

    let run_trial = |index: usize| -> Result<(TrialRecord, TrainedModel)> {
        let started = Instant::now();
        let seed = derive_seed(config.seed, index as u64);
        let mut rng = SplitMix64::new(derive_seed(seed, 2));
        let candidate = match config.strategy {
            Strategy::Random => space.sample_candidate(train.width(), num_classes, &mut rng)?,
        };
        let train_config = TrainConfig {
            max_epochs: config.max_epochs,
            batch_size: config.batch_size,
            learning_rate: candidate.learning_rate,
            patience: config.patience,
            ..TrainConfig::default()
        };
        let outcome = trainer(&TrialJob {
            index,
            seed,
            architecture: &candidate.architecture,
            config: &train_config,
            train,
            val,
        })?;
        let val_accuracy = match outcome.best_val_accuracy {
            Some(a) => a,
            None => nnet::accuracy(&outcome.model, val)?,
        };
        log::info!(
            "trial {index}: val acc {val_accuracy:.4} after {} epochs: {}",
            outcome.epochs_run(),
            candidate.architecture
        );
        let record = TrialRecord {
            trial_index: index,
            architecture: candidate.architecture,
            config: train_config,
            seed,
            val_accuracy,
            epochs_run: outcome.epochs_run(),
            wall_time: started.elapsed().as_secs_f64(),
        };
        Ok((record, outcome.model))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel.max(1))
        .build()
        .map_err(|e| arg_err!("cannot build thread pool: {e}"))?;
    let wave = config.parallel.max(1);

    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut best: Option<(usize, TrainedModel)> = None;
    let mut stale = 0;
    let mut next = 0;
    'search: while next < config.max_trials {
        let end = (next + wave).min(config.max_trials);
        let results: Vec<Result<(TrialRecord, TrainedModel)>> =
            pool.install(|| (next..end).into_par_iter().map(run_trial).collect());
        next = end;
        // Merge strictly in trial order so the outcome is independent of `parallel`.
        for result in results {
            let (record, model) = result?;
            let improved = best
                .as_ref()
                .map_or(true, |(b, _)| record.val_accuracy > trials[*b].val_accuracy);
            trials.push(record);
            if improved {
                best = Some((trials.len() - 1, model));
                stale = 0;
            } else {
                stale += 1;
                if config.stop_after_non_improving.is_some_and(|n| stale >= n) {
                    break 'search;
                }
            }
        }
    }
    let (best_trial_index, best_model) = best.expect("at least one trial ran");
    Ok(SearchResult {
        trials,
        best_trial_index,
        best_model,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureRow {
    pub layer_type: String,
    pub output_shape: usize,
    /// `None` for layers without parameters (rendered as `-`).
    pub params: Option<usize>,
}

/// Three-column architecture table (layer type, output shape, parameter count).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureTable {
    pub rows: Vec<ArchitectureRow>,
    pub total: usize,
}

impl ArchitectureTable {
    pub fn from_spec(spec: &ArchitectureSpec) -> Self {
        let counts = spec.param_count();
        let rows = spec
            .layers
            .iter()
            .zip(&counts.layers)
            .map(|(layer, c)| ArchitectureRow {
                layer_type: c.layer.clone(),
                output_shape: c.output_width,
                params: matches!(layer, LayerSpec::Dense { .. } | LayerSpec::BatchNorm | LayerSpec::Normalization)
                    .then_some(c.params),
            })
            .collect();
        Self {
            rows,
            total: counts.total,
        }
    }

    /// Markdown rendering.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Layer Type | Output Shape | Parameter Count |\n|---|---|---|\n");
        for r in &self.rows {
            let p = r.params.map_or_else(|| "-".to_string(), |p| p.to_string());
            out.push_str(&format!("| {} | {} | {} |\n", r.layer_type, r.output_shape, p));
        }
        out.push_str(&format!("| Total | | {} |\n", self.total));
        out
    }
}

impl fmt::Display for ArchitectureTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<26}{:<16}{}", "Layer Type", "Output Shape", "Parameter Count")?;
        for r in &self.rows {
            let p = r.params.map_or_else(|| "-".to_string(), |p| p.to_string());
            writeln!(f, "{:<26}{:<16}{}", r.layer_type, r.output_shape, p)?;
        }
        writeln!(f, "{:<26}{:<16}{}", "Total", "", self.total)
    }
}

/// Architecture table of the best trial.
pub fn export_architecture(result: &SearchResult) -> ArchitectureTable {
    ArchitectureTable::from_spec(&result.best_model.spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use LayerSpec::*;

    #[test]
    fn sampled_head_matches_class_count() {
        let space = SearchSpace::default();
        let mut rng = SplitMix64::new(5);
        let spec = sample_architecture(&space, 62, 5, &mut rng).unwrap();
        let n = spec.layers.len();
        assert_eq!(spec.layers[n - 2], Dense { units: 5 });
        assert_eq!(spec.layers[n - 1], Softmax);
        assert_eq!(spec.input_width, 62);
    }

    #[test]
    fn sampling_is_deterministic() {
        let space = SearchSpace::default();
        let a = space.sample_candidate(10, 3, &mut SplitMix64::new(99)).unwrap();
        let b = space.sample_candidate(10, 3, &mut SplitMix64::new(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_rejects_bad_arguments() {
        let space = SearchSpace::default();
        assert!(space.sample_candidate(0, 3, &mut SplitMix64::new(1)).is_err());
        assert!(space.sample_candidate(4, 1, &mut SplitMix64::new(1)).is_err());
    }

    #[test]
    fn thousand_samples_are_valid_and_admitted() {
        let space = SearchSpace::default();
        let mut rng = SplitMix64::new(2024);
        for _ in 0..1000 {
            let c = space.sample_candidate(62, 5, &mut rng).unwrap();
            c.architecture.validate().unwrap();
            assert!(space.admits(&c.architecture), "{}", c.architecture);
            assert!(space.learning_rates.contains(&c.learning_rate));
        }
    }

    #[test]
    fn admits_rejects_off_grammar() {
        let space = SearchSpace::default();
        let ok = ArchitectureSpec::new(8, 2, vec![Input, MultiCategoryEncoding, Dense { units: 16 }, Relu, Dense { units: 2 }, Softmax]).unwrap();
        assert!(space.admits(&ok));
        let no_relu = ArchitectureSpec::new(8, 2, vec![Input, MultiCategoryEncoding, Dense { units: 16 }, Dense { units: 2 }, Softmax]).unwrap();
        assert!(!space.admits(&no_relu));
        let odd_units = ArchitectureSpec::new(8, 2, vec![Input, MultiCategoryEncoding, Dense { units: 17 }, Relu, Dense { units: 2 }, Softmax]).unwrap();
        assert!(!space.admits(&odd_units));
        let no_blocks = ArchitectureSpec::new(8, 2, vec![Input, MultiCategoryEncoding, Dense { units: 2 }, Softmax]).unwrap();
        assert!(!space.admits(&no_blocks));
        let mut four = vec![Input, MultiCategoryEncoding];
        for _ in 0..4 {
            four.extend([Dense { units: 16 }, Relu]);
        }
        four.extend([Dense { units: 2 }, Softmax]);
        assert!(!space.admits(&ArchitectureSpec::new(8, 2, four).unwrap()));
    }

    fn record(i: usize, acc: f64) -> TrialRecord {
        TrialRecord {
            trial_index: i,
            architecture: ArchitectureSpec::new(1, 2, vec![Input, Dense { units: 2 }, Softmax]).unwrap(),
            config: TrainConfig::default(),
            seed: 0,
            val_accuracy: acc,
            epochs_run: 1,
            wall_time: 0.0,
        }
    }

    #[test]
    fn select_best_breaks_ties_by_lowest_index() {
        let accs = [0.5, 0.6, 0.7, 0.8, 0.1, 0.2, 0.3, 0.8, 0.4];
        let trials: Vec<_> = accs.iter().enumerate().map(|(i, &a)| record(i, a)).collect();
        assert_eq!(select_best(&trials), Some(3));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn export_high_avt_chen_table() {
        let spec = ArchitectureSpec::new(
            62,
            5,
            vec![
                Input,
                MultiCategoryEncoding,
                Dense { units: 128 },
                Relu,
                Dropout { rate: 0.25 },
                Dense { units: 16 },
                Relu,
                Dropout { rate: 0.25 },
                Dense { units: 32 },
                Relu,
                Dropout { rate: 0.25 },
                Dense { units: 5 },
                Softmax,
            ],
        )
        .unwrap();
        let table = ArchitectureTable::from_spec(&spec);
        let params: Vec<Option<usize>> = table.rows.iter().map(|r| r.params).collect();
        assert_eq!(
            params,
            vec![None, None, Some(8064), None, None, Some(2064), None, None, Some(544), None, None, Some(165), None]
        );
        assert_eq!(table.total, spec.param_count().total);
        assert_eq!(table.rows.len(), spec.layers.len());
        let text = table.to_string();
        assert!(text.starts_with("Layer Type"));
        assert!(text.contains("Dense Layer               128             8064"));
    }
}

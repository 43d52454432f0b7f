//! End-to-end experiment: patient-wise split, variance-threshold sweep,
//! architecture search per condition, test-set evaluation and reporting.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! split.json
//! comparison.md
//! <condition>/report.json
//! <condition>/selector.json      (AVT conditions only)
//! <condition>/trials.jsonl
//! <condition>/model.json
//! <condition>/history.csv
//! <condition>/table.md
//! ```

mod report;
mod split;

pub use report::render_comparison;
pub use split::{patient_split, Split, SplitData, SplitFractions, SplitPlan};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::avt::{self, FitOptions, VarianceSelector};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_json};
use crate::metrics::{self, Average, ClassificationReport};
use crate::nas::{self, ArchitectureTable, SearchConfig, SearchResult, SearchSpace};
use crate::nnet::{self, Matrix, TrainedModel};
use crate::rng::derive_seed;

/// Experiment settings, loadable from JSON. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub feature_csv: PathBuf,
    pub output_dir: PathBuf,
    /// AVT percentiles, strictly increasing; a baseline without AVT is added
    /// unless `include_baseline` is false.
    pub percentiles: Vec<f64>,
    pub include_baseline: bool,
    pub split: SplitFractions,
    pub seed: u64,
    pub max_trials: usize,
    pub max_epochs: usize,
    pub parallel: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub stop_after_non_improving: Option<usize>,
    pub search_space: SearchSpace,
    pub average: Average,
    pub variance_ddof: usize,
    pub drop_constant: bool,
    /// Run only the named conditions (by directory name), e.g. `["high"]`.
    pub only: Option<Vec<String>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let search = SearchConfig::default();
        Self {
            feature_csv: PathBuf::from("features.csv"),
            output_dir: PathBuf::from("out"),
            percentiles: vec![avt::LOW_PERCENTILE, avt::MID_PERCENTILE, avt::HIGH_PERCENTILE],
            include_baseline: true,
            split: SplitFractions::default(),
            seed: 0,
            max_trials: search.max_trials,
            max_epochs: search.max_epochs,
            parallel: 1,
            batch_size: search.batch_size,
            patience: search.patience,
            stop_after_non_improving: None,
            search_space: SearchSpace::default(),
            average: Average::Macro,
            variance_ddof: 0,
            drop_constant: false,
            only: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.percentiles.iter().any(|p| !(0.0..=100.0).contains(p)) {
            return Err(Error::Config("percentiles must lie in [0, 100]".into()));
        }
        if self.percentiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("percentiles must be strictly increasing".into()));
        }
        if self.percentiles.is_empty() && !self.include_baseline {
            return Err(Error::Config("no conditions to run".into()));
        }
        if self.max_trials == 0 {
            return Err(Error::Config("max_trials must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.variance_ddof > 1 {
            return Err(Error::Config("variance_ddof must be 0 or 1".into()));
        }
        self.split.validate()?;
        self.search_space.validate()?;
        if let Some(only) = &self.only {
            let known: Vec<String> = self.conditions().into_iter().map(|c| c.slug).collect();
            if let Some(bad) = only.iter().find(|s| !known.contains(s)) {
                return Err(Error::Config(format!("unknown condition {bad:?}; known: {known:?}")));
            }
        }
        Ok(())
    }

    /// All conditions implied by the config, in table order.
    pub fn conditions(&self) -> Vec<Condition> {
        let mut out = Vec::new();
        if self.include_baseline {
            out.push(Condition {
                name: "Baseline".into(),
                slug: "baseline".into(),
                percentile: None,
                seed_index: 0,
            });
        }
        let presets = self.percentiles.len() == 3;
        for (i, &p) in self.percentiles.iter().enumerate() {
            let (name, slug) = if presets {
                let level = ["Low", "Mid", "High"][i];
                (format!("{level} AVT"), level.to_lowercase())
            } else {
                (format!("AVT p={p}"), format!("avt-p{p}"))
            };
            out.push(Condition {
                name,
                slug,
                percentile: Some(p),
                seed_index: i as u64 + 1,
            });
        }
        out
    }

    fn search_config(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            max_trials: self.max_trials,
            max_epochs: self.max_epochs,
            seed,
            parallel: self.parallel,
            batch_size: self.batch_size,
            patience: self.patience,
            stop_after_non_improving: self.stop_after_non_improving,
            strategy: nas::Strategy::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    /// Output directory name.
    pub slug: String,
    /// `None` for the baseline (no thresholding).
    pub percentile: Option<f64>,
    /// Position used to derive the condition's seed; stable regardless of
    /// which subset of conditions runs.
    pub seed_index: u64,
}

#[derive(Debug, Clone)]
pub struct ConditionOutput {
    pub report: ClassificationReport,
    pub selector: Option<VarianceSelector>,
    pub search: SearchResult,
}

#[derive(Debug)]
pub struct ConditionResult {
    pub condition: Condition,
    pub outcome: Result<ConditionOutput>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub plan: SplitPlan,
    pub conditions: Vec<ConditionResult>,
}

impl ExperimentOutcome {
    pub fn reports(&self) -> Vec<(String, ClassificationReport)> {
        self.conditions
            .iter()
            .filter_map(|c| c.outcome.as_ref().ok().map(|o| (c.condition.name.clone(), o.report.clone())))
            .collect()
    }

    pub fn failures(&self) -> Vec<(&str, &Error)> {
        self.conditions
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (c.condition.name.as_str(), e)))
            .collect()
    }
}

/// Number of classes, requiring every class to occur in the training split.
pub fn class_count(all: &FeatureMatrix, train: &FeatureMatrix) -> Result<usize> {
    let k = all.labels().iter().max().map_or(0, |m| m + 1);
    let present = train.label_set();
    if let Some(missing) = (0..k).find(|c| !present.contains(c)) {
        return Err(Error::Data(format!("class {missing} has no samples in the training split")));
    }
    if k < 2 {
        return Err(Error::Data("need at least 2 classes".into()));
    }
    Ok(k)
}

fn to_matrix(data: &FeatureMatrix) -> Matrix {
    Matrix::from_vec(data.len(), data.width(), data.values().to_vec()).expect("rectangular")
}

/// Test-split report for a trained head.
pub fn evaluate(model: &TrainedModel, test: &FeatureMatrix, num_classes: usize, average: Average) -> Result<ClassificationReport> {
    let pred = model.predict(&to_matrix(test))?;
    let cm = metrics::confusion(test.labels(), &pred, num_classes)?;
    Ok(metrics::metrics_with_average(&cm, average)?.with_dimensionality(test.width()))
}

/// Runs one condition on already split data and writes its artifacts to `dir`.
pub fn run_condition(
    config: &ExperimentConfig,
    condition: &Condition,
    splits: &SplitData,
    num_classes: usize,
    dir: &Path,
) -> Result<ConditionOutput> {
    let (selector, train, val, test) = match condition.percentile {
        Some(p) => {
            let options = FitOptions {
                ddof: config.variance_ddof,
                drop_constant: config.drop_constant,
            };
            let sel = avt::fit_with(&splits.train, p, options)?;
            let (tr, va, te) = (sel.transform(&splits.train)?, sel.transform(&splits.val)?, sel.transform(&splits.test)?);
            (Some(sel), tr, va, te)
        }
        None => (None, splits.train.clone(), splits.val.clone(), splits.test.clone()),
    };
    log::info!("{}: {} features enter the search", condition.name, train.width());
    let seed = derive_seed(config.seed, condition.seed_index);
    let search = nas::search(&train, &val, &config.search_space, &config.search_config(seed))?;
    let report = evaluate(&search.best_model, &test, num_classes, config.average)?;

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("report.json"), &report)?;
    if let Some(sel) = &selector {
        write_json(&dir.join("selector.json"), sel)?;
    }
    write_atomic(&dir.join("trials.jsonl"), search.trials_jsonl()?.as_bytes())?;
    search.best_model.save(&dir.join("model.json"))?;
    let history = retrain_history(&search, &train, &val)?;
    nnet::write_history_csv(&dir.join("history.csv"), &history)?;
    let table = ArchitectureTable::from_spec(&search.best_model.spec);
    let md = format!(
        "# {} architecture\n\nBest of {} trials: trial {} (validation accuracy {}).\n\n{}",
        condition.name,
        search.trials.len(),
        search.best_trial().trial_index,
        metrics::percent(search.best_trial().val_accuracy),
        table.to_markdown()
    );
    write_atomic(&dir.join("table.md"), md.as_bytes())?;
    Ok(ConditionOutput { report, selector, search })
}

/// Per-epoch history of the winning trial, reproduced by rerunning its
/// (deterministic) training.
fn retrain_history(search: &SearchResult, train: &FeatureMatrix, val: &FeatureMatrix) -> Result<Vec<nnet::EpochRecord>> {
    let best = search.best_trial();
    let outcome = nnet::train(&best.architecture, train, val, &best.config, best.seed)?;
    debug_assert_eq!(outcome.model, search.best_model);
    Ok(outcome.history)
}

/// Runs every configured condition. Failures are recorded per condition and
/// do not stop the others; reading or splitting the data fails the whole run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let data = FeatureMatrix::read_csv(&config.feature_csv)?;
    run_experiment_on(config, &data)
}

/// [`run_experiment`] on an in-memory feature matrix.
pub fn run_experiment_on(config: &ExperimentConfig, data: &FeatureMatrix) -> Result<ExperimentOutcome> {
    config.validate()?;
    let plan = patient_split(data, config.split, config.seed)?;
    let splits = plan.apply(data)?;
    let num_classes = class_count(data, &splits.train)?;
    std::fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    write_json(&config.output_dir.join("split.json"), &plan)?;

    let mut results = Vec::new();
    for condition in config.conditions() {
        if config.only.as_ref().is_some_and(|only| !only.contains(&condition.slug)) {
            continue;
        }
        let dir = config.output_dir.join(&condition.slug);
        let outcome = run_condition(config, &condition, &splits, num_classes, &dir);
        if let Err(e) = &outcome {
            log::error!("condition {} failed: {e}", condition.name);
        }
        results.push(ConditionResult { condition, outcome });
    }
    let outcome = ExperimentOutcome {
        plan,
        conditions: results,
    };
    let reports = outcome.reports();
    if config.only.is_none() && !reports.is_empty() {
        write_atomic(&config.output_dir.join("comparison.md"), render_comparison(&reports).as_bytes())?;
    }
    Ok(outcome)
}

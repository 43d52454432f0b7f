//! Adaptive variance thresholding.
//!
//! Instead of a fixed variance cutoff, the threshold is placed at a chosen
//! percentile of the per-feature variances observed on the training split:
//!
//! 1. `v[i]` = variance of feature `i`;
//! 2. `j` = `percentile(v, p)` (linear interpolation between closest ranks);
//! 3. keep feature `i` iff `v[i] >= j`.
//!
//! With all variances distinct this keeps `w - ceil((w - 1) * p / 100)`
//! features, e.g. 4034/2048/62 of 4096 at the Low/Mid/High presets.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{arg_err, shape_err, Result};

/// Low preset: keeps roughly the top 98.5% most varying features.
pub const LOW_PERCENTILE: f64 = 1.5;
/// Mid preset: keeps the upper half.
pub const MID_PERCENTILE: f64 = 50.0;
/// High preset: keeps roughly the top 1.5%.
pub const HIGH_PERCENTILE: f64 = 98.5;

/// Per-feature variance with `ddof` delta degrees of freedom
/// (0 = population variance, the default used by [`fit`]).
pub fn feature_variances_ddof(data: &FeatureMatrix, ddof: usize) -> Result<Vec<f64>> {
    let n = data.len();
    if n == 0 {
        return Err(arg_err!("cannot compute variances of an empty matrix"));
    }
    if n <= ddof {
        return Err(arg_err!("{n} samples are too few for ddof = {ddof}"));
    }
    let w = data.width();
    let mut mean = vec![0.0; w];
    for row in data.rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    // Two-pass sum of squared deviations.
    let mut ss = vec![0.0; w];
    for row in data.rows() {
        for ((s, &m), &x) in ss.iter_mut().zip(&mean).zip(row) {
            let d = x - m;
            *s += d * d;
        }
    }
    let denom = (n - ddof) as f64;
    Ok(ss.into_iter().map(|s| s / denom).collect())
}

/// Population variance (divide by the sample count) of each feature.
pub fn feature_variances(data: &FeatureMatrix) -> Result<Vec<f64>> {
    feature_variances_ddof(data, 0)
}

/// The `p`-th percentile of `values`, linearly interpolated between the two
/// closest ranks: with sorted `s` and `t = (n - 1) * p / 100`, the result is
/// `s[floor(t)] + frac(t) * (s[floor(t) + 1] - s[floor(t)])`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(arg_err!("percentile of an empty vector"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(arg_err!("percentile {p} outside [0, 100]"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(arg_err!("percentile input contains NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_of_sorted(&sorted, p))
}

fn percentile_of_sorted(sorted: &[f64], p: f64) -> f64 {
    let last = sorted.len() - 1;
    let t = last as f64 * p / 100.0;
    let lo = t.floor() as usize;
    if lo >= last {
        return sorted[last];
    }
    let (a, b) = (sorted[lo], sorted[lo + 1]);
    // Clamp so rounding can never push the result past either neighbour.
    (a + (t - lo as f64) * (b - a)).clamp(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    /// Delta degrees of freedom of the variance estimate (0 or 1).
    pub ddof: usize,
    /// Also drop zero-variance features, even when the threshold is 0.
    pub drop_constant: bool,
}

/// A fitted threshold and the feature subset it keeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSelector {
    pub percentile: f64,
    pub threshold: f64,
    pub width: usize,
    pub variances: Vec<f64>,
    pub kept_indices: Vec<usize>,
}

/// Fits a selector at percentile `p` with population variance.
pub fn fit(data: &FeatureMatrix, p: f64) -> Result<VarianceSelector> {
    fit_with(data, p, FitOptions::default())
}

pub fn fit_with(data: &FeatureMatrix, p: f64, options: FitOptions) -> Result<VarianceSelector> {
    if data.is_empty() {
        return Err(arg_err!("cannot fit a variance selector on an empty matrix"));
    }
    if data.len() == 1 {
        log::warn!("fitting a variance selector on a single sample: all variances are zero");
    }
    let variances = feature_variances_ddof(data, options.ddof)?;
    VarianceSelector::from_variances(variances, p, options.drop_constant)
}

impl VarianceSelector {
    /// Applies the thresholding rule to precomputed variances.
    pub fn from_variances(variances: Vec<f64>, p: f64, drop_constant: bool) -> Result<Self> {
        let threshold = percentile(&variances, p)?;
        let kept_indices: Vec<usize> = variances
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v >= threshold && !(drop_constant && v == 0.0))
            .map(|(i, _)| i)
            .collect();
        if kept_indices.is_empty() {
            return Err(arg_err!("every feature is constant; nothing left to keep"));
        }
        Ok(Self {
            percentile: p,
            threshold,
            width: variances.len(),
            variances,
            kept_indices,
        })
    }

    pub fn kept_width(&self) -> usize {
        self.kept_indices.len()
    }

    /// Filters `data` down to the kept features. Never refits.
    pub fn transform(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        if data.width() != self.width {
            return Err(shape_err!(
                "selector was fitted on {} features but data has {}",
                self.width,
                data.width()
            ));
        }
        data.select_columns(&self.kept_indices)
    }

    /// Checks the structural invariants of a (possibly deserialized) selector.
    pub fn validate(&self) -> Result<()> {
        if self.variances.len() != self.width {
            return Err(shape_err!("{} variances for width {}", self.variances.len(), self.width));
        }
        if self.kept_indices.is_empty() {
            return Err(arg_err!("selector keeps no features"));
        }
        if self.kept_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(arg_err!("kept indices must be strictly increasing"));
        }
        if self.kept_indices.last().is_some_and(|&i| i >= self.width) {
            return Err(shape_err!("kept index out of range for width {}", self.width));
        }
        Ok(())
    }
}

/// Free-function form of [`VarianceSelector::transform`].
pub fn transform(selector: &VarianceSelector, data: &FeatureMatrix) -> Result<FeatureMatrix> {
    selector.transform(data)
}

//! Confusion matrices and classification reports.
//!
//! Per-class precision, recall and F1 are computed one-vs-rest from the
//! confusion matrix (rows = true label, columns = predicted label). Undefined
//! ratios (zero denominator) are set to 0 and recorded in
//! [`ClassificationReport::zero_division`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k < 2 {
            return Err(arg_err!("confusion matrix needs at least 2 classes, got {k}"));
        }
        if counts.iter().any(|r| r.len() != k) {
            return Err(shape_err!("confusion matrix must be square ({k}x{k})"));
        }
        let class_names = (0..k).map(|i| i.to_string()).collect();
        Ok(Self { counts, class_names })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes() {
            return Err(shape_err!("{} class names for {} classes", names.len(), self.num_classes()));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    pub fn column_sum(&self, predicted: usize) -> u64 {
        self.counts.iter().map(|r| r[predicted]).sum()
    }

    /// Each row divided by its sum; all-zero rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }
}

/// Counts `(y_true[i], y_pred[i])` pairs into a `k`-class matrix.
pub fn confusion(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(shape_err!("{} true labels but {} predictions", y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(arg_err!("cannot build a confusion matrix from zero samples"));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(arg_err!("label pair ({t}, {p}) out of range for {k} classes"));
        }
        counts[t][p] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    /// Unweighted mean over classes.
    #[default]
    Macro,
    /// Mean weighted by class support.
    Weighted,
}

impl std::str::FromStr for Average {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Average::Macro),
            "weighted" => Ok(Average::Weighted),
            other => Err(arg_err!("unknown averaging mode {other:?} (expected macro or weighted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Width of the feature vectors entering the classifier head.
    pub dimensionality: usize,
    pub average: Average,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Names of classes whose precision or recall had a zero denominator.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zero_division: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Macro-averaged report.
pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    metrics_with_average(cm, Average::Macro)
}

pub fn metrics_with_average(cm: &ConfusionMatrix, average: Average) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(arg_err!("confusion matrix has no samples"));
    }
    let k = cm.num_classes();
    let mut per_class = Vec::with_capacity(k);
    let mut zero_division = Vec::new();
    for c in 0..k {
        let tp = cm.get(c, c);
        let predicted = cm.column_sum(c); // tp + fp
        let support = cm.row_sum(c); // tp + fn
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        if precision.is_none() || recall.is_none() {
            zero_division.push(cm.class_names()[c].clone());
        }
        let (precision, recall) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            class: cm.class_names()[c].clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    let weights: Vec<f64> = match average {
        Average::Macro => vec![1.0 / k as f64; k],
        Average::Weighted => per_class.iter().map(|m| m.support as f64 / total as f64).collect(),
    };
    let avg = |f: fn(&ClassMetrics) -> f64| per_class.iter().zip(&weights).map(|(m, w)| f(m) * w).sum::<f64>();
    Ok(ClassificationReport {
        dimensionality: 0,
        average,
        accuracy: cm.trace() as f64 / total as f64,
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        per_class,
        zero_division,
        confusion: cm.counts().to_vec(),
    })
}

impl ClassificationReport {
    pub fn with_dimensionality(mut self, dimensionality: usize) -> Self {
        self.dimensionality = dimensionality;
        self
    }

    /// Rebuilds the confusion matrix stored in the report.
    pub fn confusion_matrix(&self) -> Result<ConfusionMatrix> {
        ConfusionMatrix::from_counts(self.confusion.clone())?
            .with_class_names(self.per_class.iter().map(|m| m.class.clone()).collect())
    }

    /// sklearn-style plain-text report.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>12} {:>10} {:>10} {:>10} {:>10}", "", "precision", "recall", "f1-score", "support");
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{:>12} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                m.class, m.precision, m.recall, m.f1, m.support
            );
        }
        let support: u64 = self.per_class.iter().map(|m| m.support).sum();
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>12} {:>10} {:>10} {:>10.4} {:>10}", "accuracy", "", "", self.accuracy, support);
        let label = match self.average {
            Average::Macro => "macro avg",
            Average::Weighted => "weighted avg",
        };
        let _ = writeln!(
            out,
            "{:>12} {:>10.4} {:>10.4} {:>10.4} {:>10}",
            label, self.precision, self.recall, self.f1, support
        );
        let _ = writeln!(out, "{:>12} {}", "dims", self.dimensionality);
        out
    }
}

/// Per-class recall (diagonal over row sum); `None` where a class has no true samples.
pub fn recall_table(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.num_classes()).map(|c| ratio(cm.get(c, c), cm.row_sum(c))).collect()
}

/// Formats a fraction as a percentage with two decimals, e.g. `0.7114` -> `71.14%`.
pub fn percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn worked() -> ConfusionMatrix {
        confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap()
    }

    #[test]
    fn perfect_prediction_is_diagonal() {
        let y = [0, 2, 1, 2, 0];
        let cm = confusion(&y, &y, 3).unwrap();
        assert_eq!(cm.counts(), &[vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        let r = metrics_from_confusion(&cm).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(recall_table(&cm), vec![Some(1.0); 3]);
    }

    #[test]
    fn hand_counted_matrix() {
        let cm = worked();
        assert_eq!(cm.counts(), &[vec![1, 1], vec![0, 2]]);
        assert_eq!(cm.row_normalized(), vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
    }

    #[test]
    fn worked_metrics() {
        let r = metrics_from_confusion(&worked()).unwrap();
        assert!((r.accuracy - 0.75).abs() < 1e-12);
        assert!((r.precision - 5.0 / 6.0).abs() < 1e-12);
        assert!((r.recall - 0.75).abs() < 1e-12);
        assert!((r.f1 - 11.0 / 15.0).abs() < 1e-12);
        assert!(r.zero_division.is_empty());
    }

    #[test]
    fn weighted_average() {
        // supports (2, 2) -> weighted equals macro here; use an unbalanced case.
        let cm = confusion(&[0, 0, 0, 1], &[0, 0, 1, 1], 2).unwrap();
        let r = metrics_with_average(&cm, Average::Weighted).unwrap();
        // class 0: p=1, r=2/3; class 1: p=1/2, r=1; weights 3/4, 1/4
        assert!((r.precision - (0.75 + 0.125)).abs() < 1e-12);
        assert!((r.recall - 0.75).abs() < 1e-12);
    }

    #[test]
    fn never_predicted_class_gets_zero_precision() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 0], vec![2, 0]]).unwrap();
        let r = metrics_from_confusion(&cm).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert_eq!(r.zero_division, vec!["1".to_string()]);
    }

    #[test]
    fn recall_table_examples() {
        let cm = ConfusionMatrix::from_counts(vec![vec![9, 1], vec![5, 5]]).unwrap();
        assert_eq!(recall_table(&cm), vec![Some(0.9), Some(0.5)]);
        let cm = ConfusionMatrix::from_counts(vec![vec![0, 0], vec![1, 3]]).unwrap();
        assert_eq!(recall_table(&cm), vec![None, Some(0.75)]);
    }

    #[test]
    fn errors() {
        assert!(matches!(confusion(&[0, 1], &[0], 2), Err(Error::Shape(_))));
        assert!(matches!(confusion(&[0, 2], &[0, 1], 2), Err(Error::Argument(_))));
        assert!(confusion(&[], &[], 2).is_err());
        let zero = ConfusionMatrix::from_counts(vec![vec![0, 0], vec![0, 0]]).unwrap();
        assert!(matches!(metrics_from_confusion(&zero), Err(Error::Argument(_))));
        assert!(ConfusionMatrix::from_counts(vec![vec![1]]).is_err());
    }

    #[test]
    fn report_json_keys() {
        let r = metrics_from_confusion(&worked()).unwrap().with_dimensionality(62);
        let v = serde_json::to_value(&r).unwrap();
        for key in ["dimensionality", "accuracy", "precision", "recall", "f1", "per_class", "confusion"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["dimensionality"], 62);
        assert_eq!(r.confusion_matrix().unwrap(), worked());
    }

    #[test]
    fn percent_two_decimals() {
        assert_eq!(percent(0.7114), "71.14%");
        assert_eq!(percent(1.0), "100.00%");
    }
}

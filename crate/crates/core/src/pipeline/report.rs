use std::fmt::Write as _;

use crate::metrics::{percent, recall_table, ClassificationReport};

/// Markdown comparison of condition reports: a metric table with one column
/// per condition (Dimensionality, Accuracy, Precision, Recall, F1-score) and
/// a per-class recall table ordered by class index.
pub fn render_comparison(reports: &[(String, ClassificationReport)]) -> String {
    let mut out = String::new();
    let header = |out: &mut String, first: &str| {
        let _ = write!(out, "| {first} |");
        for (name, _) in reports {
            let _ = write!(out, " {name} |");
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in reports {
            out.push_str("---|");
        }
        out.push('\n');
    };
    header(&mut out, "Metric");
    let rows: [(&str, fn(&ClassificationReport) -> String); 5] = [
        ("Dimensionality", |r| r.dimensionality.to_string()),
        ("Accuracy", |r| percent(r.accuracy)),
        ("Precision", |r| percent(r.precision)),
        ("Recall", |r| percent(r.recall)),
        ("F1-score", |r| percent(r.f1)),
    ];
    for (label, f) in rows {
        let _ = write!(out, "| {label} |");
        for (_, r) in reports {
            let _ = write!(out, " {} |", f(r));
        }
        out.push('\n');
    }

    out.push('\n');
    header(&mut out, "Class");
    let recalls: Vec<Vec<Option<f64>>> = reports
        .iter()
        .map(|(_, r)| r.confusion_matrix().map(|cm| recall_table(&cm)).unwrap_or_default())
        .collect();
    let classes = recalls.iter().map(Vec::len).max().unwrap_or(0);
    for k in 0..classes {
        let _ = write!(out, "| {k} |");
        for rec in &recalls {
            let cell = rec.get(k).copied().flatten().map_or_else(|| "-".to_string(), percent);
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}

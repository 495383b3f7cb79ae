//! Classification metrics with the zero-division-is-zero convention.

use serde::{Deserialize, Serialize};

use crate::corpus::ToneLabel;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][pred]` counts.
    pub confusion: Vec<Vec<usize>>,
    /// Classes averaged into `macro_f1`.
    pub macro_classes: usize,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_name(classes: usize, k: usize) -> String {
    if classes == ToneLabel::COUNT {
        ToneLabel::ALL[k].as_str().to_string()
    } else {
        k.to_string()
    }
}

/// Metrics over `classes` categories. `include`, when given, restricts the
/// macro average to the flagged classes; otherwise every class counts.
pub fn compute_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    classes: usize,
    include: Option<&[bool]>,
) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Input(format!("{} true labels for {} predictions", y_true.len(), y_pred.len())));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&y| y >= classes) {
        return Err(Error::Input(format!("label {bad} outside {classes} classes")));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..classes).map(|k| confusion[k][k]).sum();
    let per_class: Vec<ClassMetrics> = (0..classes)
        .map(|k| {
            let tp = confusion[k][k];
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|r| r[k]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassMetrics { label: class_name(classes, k), precision, recall, f1, support }
        })
        .collect();
    let chosen: Vec<&ClassMetrics> =
        per_class.iter().enumerate().filter(|(k, _)| include.is_none_or(|inc| inc[*k])).map(|(_, m)| m).collect();
    let macro_f1 = if chosen.is_empty() { 0.0 } else { chosen.iter().map(|m| m.f1).sum::<f64>() / chosen.len() as f64 };
    Ok(MetricsReport {
        accuracy: ratio(correct, y_true.len()),
        macro_f1,
        macro_classes: chosen.len(),
        per_class,
        confusion,
    })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

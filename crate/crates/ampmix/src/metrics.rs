//! Classification metrics: weighted / macro / micro F1 and balanced
//! accuracy over (true, predicted) label pairs.
//!
//! Conventions for degenerate counts:
//! - precision, recall, and F1 are 0 whenever their denominator is 0;
//! - classes with zero true support and zero predictions are excluded from
//!   macro F1 and balanced accuracy;
//! - a class that is predicted but never true contributes F1 = 0 to macro;
//! - balanced accuracy averages recall over classes with support > 0 only.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A set of (true label, predicted label) pairs over `n_classes` classes,
/// optionally tagged with item identifiers.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    n_classes: usize,
    pairs: Vec<(usize, usize)>,
    ids: Vec<String>,
}

impl PredictionSet {
    pub fn new(n_classes: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let ids = (0..pairs.len()).map(|i| i.to_string()).collect();
        Self::with_ids(n_classes, pairs, ids)
    }

    pub fn with_ids(
        n_classes: usize,
        pairs: Vec<(usize, usize)>,
        ids: Vec<String>,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::validation("empty prediction set".to_string()));
        }
        if ids.len() != pairs.len() {
            return Err(Error::validation(format!(
                "{} ids for {} pairs",
                ids.len(),
                pairs.len()
            )));
        }
        if let Some(&(t, p)) = pairs
            .iter()
            .find(|&&(t, p)| t >= n_classes || p >= n_classes)
        {
            return Err(Error::validation(format!(
                "label pair ({t}, {p}) out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            n_classes,
            pairs,
            ids,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Per-class precision/recall/F1 with true-label support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Times this class was predicted.
    pub predicted: usize,
}

/// The four headline metrics plus the per-class table behind them.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub weighted_f1: f64,
    pub unweighted_f1: f64,
    pub global_f1: f64,
    pub balanced_accuracy: f64,
    pub per_class: Vec<ClassStats>,
}

/// Count matrix: entry `(t, p)` counts samples with true class `t`
/// predicted as `p`.
pub fn confusion_matrix(preds: &PredictionSet) -> Vec<Vec<u64>> {
    let c = preds.n_classes();
    let mut m = vec![vec![0u64; c]; c];
    for &(t, p) in preds.pairs() {
        m[t][p] += 1;
    }
    m
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Compute all four metrics from a prediction set.
pub fn compute_metrics(preds: &PredictionSet) -> Result<MetricsReport> {
    let c = preds.n_classes();
    let m = confusion_matrix(preds);
    let total = preds.len() as f64;

    let mut per_class = Vec::with_capacity(c);
    for (k, row) in m.iter().enumerate() {
        let tp = row[k] as f64;
        let support: u64 = row.iter().sum();
        let predicted: u64 = (0..c).map(|t| m[t][k]).sum();
        let precision = safe_div(tp, predicted as f64);
        let recall = safe_div(tp, support as f64);
        let f1 = safe_div(2.0 * precision * recall, precision + recall);
        per_class.push(ClassStats {
            precision,
            recall,
            f1,
            support: support as usize,
            predicted: predicted as usize,
        });
    }

    // Macro F1 over classes that appear at all (as truth or prediction);
    // silent classes carry no evidence either way.
    let active: Vec<&ClassStats> = per_class
        .iter()
        .filter(|s| s.support > 0 || s.predicted > 0)
        .collect();
    let unweighted_f1 = safe_div(active.iter().map(|s| s.f1).sum(), active.len() as f64);

    let weighted_f1 = per_class
        .iter()
        .map(|s| s.f1 * s.support as f64)
        .sum::<f64>()
        / total;

    // Micro F1 pools counts; in single-label classification it equals
    // accuracy.
    let correct: u64 = (0..c).map(|k| m[k][k]).sum();
    let global_f1 = correct as f64 / total;

    let supported: Vec<&ClassStats> = per_class.iter().filter(|s| s.support > 0).collect();
    let balanced_accuracy = safe_div(
        supported.iter().map(|s| s.recall).sum(),
        supported.len() as f64,
    );

    Ok(MetricsReport {
        weighted_f1,
        unweighted_f1,
        global_f1,
        balanced_accuracy,
        per_class,
    })
}

impl MetricsReport {
    /// Aligned-column human-readable rendering.
    pub fn to_table(&self, class_names: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>10} {:>10} {:>10} {:>8}",
            "class", "precision", "recall", "f1", "support"
        );
        for (k, s) in self.per_class.iter().enumerate() {
            let name = class_names.get(k).cloned().unwrap_or_else(|| k.to_string());
            let _ = writeln!(
                out,
                "{:<14} {:>10.4} {:>10.4} {:>10.4} {:>8}",
                name, s.precision, s.recall, s.f1, s.support
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "weighted_f1        {:.6}", self.weighted_f1);
        let _ = writeln!(out, "unweighted_f1      {:.6}", self.unweighted_f1);
        let _ = writeln!(out, "global_f1          {:.6}", self.global_f1);
        let _ = writeln!(out, "balanced_accuracy  {:.6}", self.balanced_accuracy);
        out
    }

    /// Machine-readable `key=value` rendering.
    pub fn to_key_values(&self) -> String {
        format!(
            "weighted_f1={:.12}\nunweighted_f1={:.12}\nglobal_f1={:.12}\nbalanced_accuracy={:.12}\n",
            self.weighted_f1, self.unweighted_f1, self.global_f1, self.balanced_accuracy
        )
    }
}

/// Parse a predictions file: one `item_id,true_label,predicted_label` line
/// per sample. The class count is one past the largest label seen, unless a
/// larger `min_classes` is given.
pub fn read_predictions(path: &Path, min_classes: usize) -> Result<PredictionSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, path, min_classes)
}

fn parse_predictions(text: &str, path: &Path, min_classes: usize) -> Result<PredictionSet> {
    let mut pairs = Vec::new();
    let mut ids = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line == "item_id,true_label,predicted_label") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 3 comma-separated fields, got {}", parts.len()),
            });
        }
        let parse_label = |field: &str, what: &str| {
            field.trim().parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("invalid {what} label {field:?}"),
            })
        };
        ids.push(parts[0].trim().to_string());
        pairs.push((
            parse_label(parts[1], "true")?,
            parse_label(parts[2], "predicted")?,
        ));
    }
    if pairs.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no prediction lines".to_string(),
        });
    }
    let n_classes = pairs
        .iter()
        .map(|&(t, p)| t.max(p) + 1)
        .max()
        .unwrap()
        .max(min_classes);
    PredictionSet::with_ids(n_classes, pairs, ids)
}

/// Serialize a prediction set in the file format read by
/// [`read_predictions`], with a header line.
pub fn format_predictions(preds: &PredictionSet) -> String {
    let mut out = String::from("item_id,true_label,predicted_label\n");
    for (id, &(t, p)) in preds.ids().iter().zip(preds.pairs()) {
        let _ = writeln!(out, "{id},{t},{p}");
    }
    out
}

//! Classification and feature-recovery metrics.

use std::fmt::Write as _;

use crate::variation::BinaryChromosome;
use crate::{Error, Result};

/// `C × C` counts, rows are true classes and columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::InvalidArgument(format!(
                "label vectors differ in length: {} vs {}",
                y_true.len(),
                y_pred.len()
            )));
        }
        let mut counts = vec![vec![0; n_classes]; n_classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {} outside 0..{n_classes}",
                    t.max(p)
                )));
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, pred: usize) -> usize {
        self.counts[truth][pred]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn class_total(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    /// Recall of each class; errors if a class has no samples.
    pub fn true_positive_fractions(&self) -> Result<Vec<f64>> {
        (0..self.n_classes())
            .map(|c| {
                let total = self.class_total(c);
                if total == 0 {
                    Err(Error::InvalidArgument(format!("class {c} has no samples")))
                } else {
                    Ok(self.counts[c][c] as f64 / total as f64)
                }
            })
            .collect()
    }
}

fn n_classes_of(y: &[usize]) -> usize {
    y.iter().max().map_or(0, |m| m + 1)
}

/// Mean per-class recall. Every class in `0..n_classes` must occur in
/// `y_true`.
pub fn balanced_accuracy_k(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64> {
    let cm = ConfusionMatrix::new(y_true, y_pred, n_classes)?;
    let tpf = cm.true_positive_fractions()?;
    Ok(tpf.iter().sum::<f64>() / n_classes as f64)
}

/// [`balanced_accuracy_k`] with the class count inferred from the labels.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let c = n_classes_of(y_true).max(n_classes_of(y_pred));
    balanced_accuracy_k(y_true, y_pred, c)
}

/// `(sensitivity, specificity)` with class 1 as positive.
pub fn sensitivity_specificity(y_true: &[usize], y_pred: &[usize]) -> Result<(f64, f64)> {
    let cm = ConfusionMatrix::new(y_true, y_pred, 2)?;
    let tpf = cm.true_positive_fractions()?;
    Ok((tpf[1], tpf[0]))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from average ranks.
pub fn auc_binary(y_true: &[bool], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::InvalidArgument("labels and scores differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let n_pos = y_true.iter().filter(|&&b| b).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("AUC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| y_true[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// One-vs-rest AUC per class; `scores[i][c]` is sample `i`'s score for
/// class `c`.
pub fn auc_per_class(y_true: &[usize], scores: &[Vec<f64>], n_classes: usize) -> Result<Vec<f64>> {
    if y_true.len() != scores.len() {
        return Err(Error::InvalidArgument("labels and scores differ in length".into()));
    }
    if scores.iter().any(|r| r.len() != n_classes) {
        return Err(Error::InvalidArgument(format!(
            "every score row needs {n_classes} entries"
        )));
    }
    (0..n_classes)
        .map(|c| {
            let pos: Vec<bool> = y_true.iter().map(|&y| y == c).collect();
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            auc_binary(&pos, &s).map_err(|_| {
                Error::InvalidArgument(format!("class {c} is missing or is the only class"))
            })
        })
        .collect()
}

/// One-vs-rest AUCs averaged with weights proportional to class size.
pub fn auc_multiclass_ova(y_true: &[usize], scores: &[Vec<f64>], n_classes: usize) -> Result<f64> {
    let aucs = auc_per_class(y_true, scores, n_classes)?;
    let mut sizes = vec![0usize; n_classes];
    for &y in y_true {
        sizes[y] += 1;
    }
    Ok(aucs
        .iter()
        .zip(&sizes)
        .map(|(a, &n)| a * n as f64)
        .sum::<f64>()
        / y_true.len() as f64)
}

/// ROC points `(FPF, TPF)` from the highest threshold down, starting at
/// the origin and ending at `(1, 1)`.
pub fn roc_points(y_true: &[bool], scores: &[f64]) -> Result<Vec<(f64, f64)>> {
    auc_binary(y_true, scores)?;
    let n_pos = y_true.iter().filter(|&&b| b).count() as f64;
    let n_neg = y_true.len() as f64 - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        if y_true[i] {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        if k + 1 == order.len() || scores[order[k + 1]] != scores[i] {
            pts.push((fp / n_neg, tp / n_pos));
        }
    }
    Ok(pts)
}

/// `TP / (TP + (FP + FN) / 2)` over feature indices. Zero when nothing is
/// selected or nothing is informative.
pub fn feature_f1(selected: &BinaryChromosome, informative: &BinaryChromosome) -> Result<f64> {
    if selected.len() != informative.len() {
        return Err(Error::InvalidArgument(format!(
            "mask lengths differ: {} vs {}",
            selected.len(),
            informative.len()
        )));
    }
    let tp = selected.intersection_count(informative) as f64;
    let fp = selected.count_ones() as f64 - tp;
    let fn_ = informative.count_ones() as f64 - tp;
    let denom = tp + 0.5 * (fp + fn_);
    Ok(if denom == 0.0 { 0.0 } else { tp / denom })
}

/// Test-set summary of a trained model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationReport {
    pub n_samples: usize,
    pub balanced_accuracy: f64,
    /// Binary tasks only.
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub auc: f64,
    pub per_class_tpf: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
    pub view_names: Vec<String>,
    pub selected_counts: Vec<usize>,
    /// Per view, when ground truth is known.
    pub feature_f1: Vec<Option<f64>>,
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

impl EvaluationReport {
    /// Flat `key = value` record, one entry per line.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_samples = {}", self.n_samples);
        let _ = writeln!(s, "balanced_accuracy = {}", fmt_f(self.balanced_accuracy));
        if let (Some(se), Some(sp)) = (self.sensitivity, self.specificity) {
            let _ = writeln!(s, "sensitivity = {}", fmt_f(se));
            let _ = writeln!(s, "specificity = {}", fmt_f(sp));
        }
        let _ = writeln!(s, "auc = {}", fmt_f(self.auc));
        for (c, t) in self.per_class_tpf.iter().enumerate() {
            let _ = writeln!(s, "tpf.class{c} = {}", fmt_f(*t));
        }
        for (c, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "confusion.row{c} = {}", cells.join(","));
        }
        for (v, name) in self.view_names.iter().enumerate() {
            let _ = writeln!(s, "selected.{name} = {}", self.selected_counts[v]);
            if let Some(Some(f)) = self.feature_f1.get(v) {
                let _ = writeln!(s, "feature_f1.{name} = {}", fmt_f(*f));
            }
        }
        s
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["n_samples", "balanced_accuracy", "sensitivity", "specificity", "auc"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        for c in 0..self.per_class_tpf.len() {
            cols.push(format!("tpf_class{c}"));
        }
        for name in &self.view_names {
            cols.push(format!("selected_{name}"));
            cols.push(format!("feature_f1_{name}"));
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f).unwrap_or_default();
        let mut cells = vec![
            self.n_samples.to_string(),
            fmt_f(self.balanced_accuracy),
            opt(self.sensitivity),
            opt(self.specificity),
            fmt_f(self.auc),
        ];
        cells.extend(self.per_class_tpf.iter().map(|t| fmt_f(*t)));
        for v in 0..self.view_names.len() {
            cells.push(self.selected_counts[v].to_string());
            cells.push(opt(self.feature_f1.get(v).copied().flatten()));
        }
        cells.join(",")
    }
}

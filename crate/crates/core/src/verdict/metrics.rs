use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    #[serde(rename = "true")]
    pub true_class: ClassMetrics,
    #[serde(rename = "false")]
    pub false_class: ClassMetrics,
    pub macro_f1: f64,
    pub accuracy: f64,
}

impl ClassificationMetrics {
    /// Unweighted mean of each field.
    pub fn mean(items: &[ClassificationMetrics]) -> ClassificationMetrics {
        let n = items.len().max(1) as f64;
        let avg = |f: &dyn Fn(&ClassificationMetrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        let class = |g: &dyn Fn(&ClassificationMetrics) -> ClassMetrics| ClassMetrics {
            precision: avg(&|m| g(m).precision),
            recall: avg(&|m| g(m).recall),
            f1: avg(&|m| g(m).f1),
        };
        ClassificationMetrics {
            true_class: class(&|m| m.true_class),
            false_class: class(&|m| m.false_class),
            macro_f1: avg(&|m| m.macro_f1),
            accuracy: avg(&|m| m.accuracy),
        }
    }
}

fn class_metrics(gold: &[Label], pred: &[Label], class: Label) -> ClassMetrics {
    let tp = gold.iter().zip(pred).filter(|(g, p)| **g == class && **p == class).count() as f64;
    let predicted = pred.iter().filter(|p| **p == class).count() as f64;
    let actual = gold.iter().filter(|g| **g == class).count() as f64;
    let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
    let recall = if actual > 0.0 { tp / actual } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassMetrics { precision, recall, f1 }
}

/// Per-class precision, recall and F1 plus macro-F1. A class never predicted
/// has precision 0.
pub fn classification_metrics(gold: &[Label], pred: &[Label]) -> Result<ClassificationMetrics> {
    if gold.len() != pred.len() {
        return Err(Error::invalid(format!("{} gold labels vs {} predictions", gold.len(), pred.len())));
    }
    if gold.is_empty() {
        return Err(Error::invalid("no labels to score"));
    }
    let t = class_metrics(gold, pred, Label::True);
    let f = class_metrics(gold, pred, Label::False);
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(ClassificationMetrics {
        true_class: t,
        false_class: f,
        macro_f1: (t.f1 + f.f1) / 2.0,
        accuracy: correct as f64 / gold.len() as f64,
    })
}

/// Fraction of claims whose relevant result appears at 1-based rank `≤ k`.
pub fn ap_at_k(ranks: &[Option<usize>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if ranks.is_empty() {
        return Err(Error::invalid("no claims to score"));
    }
    if ranks.contains(&Some(0)) {
        return Err(Error::invalid("ranks are 1-based"));
    }
    let hits = ranks.iter().filter(|r| matches!(r, Some(r) if *r <= k)).count();
    Ok(hits as f64 / ranks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub metrics: ClassificationMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub head: String,
    pub seed: u64,
    pub folds: Vec<FoldMetrics>,
    pub mean: ClassificationMetrics,
}

impl MetricsReport {
    pub fn new(head: impl Into<String>, seed: u64, folds: Vec<FoldMetrics>) -> Self {
        let all: Vec<ClassificationMetrics> = folds.iter().map(|f| f.metrics).collect();
        Self {
            head: head.into(),
            seed,
            mean: ClassificationMetrics::mean(&all),
            folds,
        }
    }

    /// One row per fold plus the mean, in the column layout
    /// `True P R F1 | False P R F1 | Macro F1`.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>6} {:>6}   {:>6} {:>6} {:>6}   {:>8}",
            self.head, "T-P", "T-R", "T-F1", "F-P", "F-R", "F-F1", "Macro F1"
        );
        let row = |out: &mut String, name: &str, m: &ClassificationMetrics| {
            let _ = writeln!(
                out,
                "{:<14} {:>6.2} {:>6.2} {:>6.2}   {:>6.2} {:>6.2} {:>6.2}   {:>8.2}",
                name,
                m.true_class.precision,
                m.true_class.recall,
                m.true_class.f1,
                m.false_class.precision,
                m.false_class.recall,
                m.false_class.f1,
                m.macro_f1
            );
        };
        for f in &self.folds {
            row(&mut out, &format!("fold {}", f.fold), &f.metrics);
        }
        row(&mut out, "mean", &self.mean);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{False as F, True as T};

    #[test]
    fn hand_confusion_matrix() {
        let m = classification_metrics(&[T, T, F, F], &[T, F, F, F]).unwrap();
        assert_eq!(m.true_class.precision, 1.0);
        assert_eq!(m.true_class.recall, 0.5);
        assert!((m.true_class.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.false_class.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.false_class.recall, 1.0);
        assert!((m.false_class.f1 - 0.8).abs() < 1e-12);
        assert!((m.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_predictors() {
        let gold = [T, F, T, F, F];
        let perfect = classification_metrics(&gold, &gold).unwrap();
        assert_eq!(perfect.macro_f1, 1.0);
        let constant = classification_metrics(&gold, &[T; 5]).unwrap();
        assert_eq!(constant.true_class.recall, 1.0);
        assert_eq!(constant.false_class.recall, 0.0);
        assert_eq!(constant.false_class.precision, 0.0);
        assert_eq!(constant.false_class.f1, 0.0);
        assert!(classification_metrics(&gold, &[T]).is_err());
    }

    #[test]
    fn ap_examples() {
        assert!((ap_at_k(&[Some(1), Some(3), Some(101)], 5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ap_at_k(&[Some(1); 4], 1).unwrap(), 1.0);
        assert_eq!(ap_at_k(&[None, None], 10).unwrap(), 0.0);
        assert!(ap_at_k(&[], 5).is_err());
        assert!(ap_at_k(&[Some(1)], 0).is_err());
    }

    #[test]
    fn report_mean_is_unweighted() {
        let a = classification_metrics(&[T, F], &[T, F]).unwrap();
        let b = classification_metrics(&[T, F], &[T, T]).unwrap();
        let r = MetricsReport::new(
            "nli",
            1,
            vec![
                FoldMetrics { fold: 0, train_size: 2, test_size: 2, metrics: a },
                FoldMetrics { fold: 1, train_size: 2, test_size: 2, metrics: b },
            ],
        );
        assert!((r.mean.macro_f1 - (a.macro_f1 + b.macro_f1) / 2.0).abs() < 1e-15);
        assert!((r.mean.macro_f1 - (r.mean.true_class.f1 + r.mean.false_class.f1) / 2.0).abs() < 1e-15);
        assert_eq!(r.table().lines().count(), 4);
    }
}

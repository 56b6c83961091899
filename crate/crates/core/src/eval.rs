//! Shared binary-classification metric kernel.
//!
//! Ratios with a zero denominator are reported as `None` and listed in
//! [`Metrics::undefined`], never silently coerced to zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("empty population: no predictions to evaluate")]
    EmptyPopulation,
    #[error("alignment error: {predictions} predictions vs {labels} labels")]
    AlignmentError { predictions: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_pairs(preds: &[bool], labels: &[bool]) -> Result<Self, EvalError> {
        if preds.len() != labels.len() {
            return Err(EvalError::AlignmentError {
                predictions: preds.len(),
                labels: labels.len(),
            });
        }
        let mut c = ConfusionCounts::default();
        for (&p, &l) in preds.iter().zip(labels) {
            c.record(p, l);
        }
        Ok(c)
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn population(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Names of metrics whose denominator was zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics_from_confusion(c: &ConfusionCounts) -> Result<Metrics, EvalError> {
    let n = c.population();
    if n == 0 {
        return Err(EvalError::EmptyPopulation);
    }
    let accuracy = ratio(c.tp + c.tn, n);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    // 2TP / (2TP + FP + FN): defined whenever the class occurs in either
    // predictions or labels, even if precision or recall alone is not.
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    let mut undefined = Vec::new();
    for (name, v) in [("precision", precision), ("recall", recall), ("f1", f1)] {
        if v.is_none() {
            undefined.push(name.to_string());
        }
    }
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassF1 {
    pub f1_pos: Option<f64>,
    pub f1_neg: Option<f64>,
    /// Mean of the defined per-class scores.
    pub macro_f1: Option<f64>,
    /// Set when a per-class F1 is reported but its precision or recall was undefined.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

pub fn f1_per_class(preds: &[bool], labels: &[bool]) -> Result<PerClassF1, EvalError> {
    let c = ConfusionCounts::from_pairs(preds, labels)?;
    per_class_from_confusion(&c)
}

pub fn per_class_from_confusion(c: &ConfusionCounts) -> Result<PerClassF1, EvalError> {
    let pos = metrics_from_confusion(c)?;
    let neg = metrics_from_confusion(&c.swapped())?;
    let mut flags = Vec::new();
    for (class, m) in [("pos", &pos), ("neg", &neg)] {
        if m.f1.is_some() {
            for u in &m.undefined {
                flags.push(format!("f1_{class}: {u} undefined"));
            }
        }
    }
    let defined: Vec<f64> = [pos.f1, neg.f1].into_iter().flatten().collect();
    let macro_f1 = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(PerClassF1 {
        f1_pos: pos.f1,
        f1_neg: neg.f1,
        macro_f1,
        flags,
    })
}

//! Label-level scoring of extracted records against gold records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::eval::{metrics_from_confusion, ConfusionCounts, Metrics};

use super::schema::{Biomarker, Record, Target};
use super::ExtractionError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub note_id: String,
    pub target: Target,
    pub record: Record,
}

/// Each label as an optional canonical string: `None` means absent
/// (null, false, or unknown).
pub fn label_values(record: &Record) -> Vec<(&'static str, Option<String>)> {
    fn s<T: ToString>(v: Option<T>) -> Option<String> {
        v.map(|x| x.to_string())
    }
    fn flag(b: bool) -> Option<String> {
        b.then(|| "true".to_string())
    }
    fn marker(b: Biomarker) -> Option<String> {
        (b != Biomarker::Unknown).then(|| b.to_string())
    }
    match record {
        Record::Phenotype(p) => vec![
            ("t_stage", s(p.t_stage)),
            ("n_stage", s(p.n_stage)),
            ("m_stage", s(p.m_stage)),
            ("stage_group", s(p.stage_group)),
            ("tumor_size_cm", p.tumor_size_cm.map(|x| format!("{x:.1}"))),
            ("grade", s(p.grade)),
            ("ecog", s(p.ecog)),
            ("karnofsky", s(p.karnofsky)),
            ("er", marker(p.er)),
            ("pr", marker(p.pr)),
            ("her2", marker(p.her2)),
        ],
        Record::Outcome(o) => vec![
            ("progression.progressed", flag(o.progression.progressed)),
            ("progression.discontinued", flag(o.progression.discontinued)),
            ("toxicity.adverse_effects", flag(o.toxicity.adverse_effects)),
            ("toxicity.qol_deterioration", flag(o.toxicity.qol_deterioration)),
            ("toxicity.discontinued_or_modified", flag(o.toxicity.discontinued_or_modified)),
            ("death_hospice.died", flag(o.death_hospice.died)),
            ("death_hospice.hospice", flag(o.death_hospice.hospice)),
            ("death_hospice.event_date", s(o.death_hospice.event_date)),
            ("death_hospice.any", flag(o.death_hospice.died || o.death_hospice.hospice)),
        ],
    }
}

/// Outcome categories: label used for each.
pub const CATEGORIES: &[(&str, &str)] = &[
    ("progression", "progression.progressed"),
    ("toxicity", "toxicity.adverse_effects"),
    ("death", "death_hospice.any"),
];

/// Present-and-equal is TP, predicted-but-wrong is FP, missed is FN,
/// both absent is TN.
fn record_label(counts: &mut ConfusionCounts, pred: &Option<String>, gold: &Option<String>) {
    match (pred, gold) {
        (Some(p), Some(g)) if p == g => counts.tp += 1,
        (Some(_), _) => counts.fp += 1,
        (None, Some(_)) => counts.fn_ += 1,
        (None, None) => counts.tn += 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub counts: ConfusionCounts,
    /// `None` when no records were scored.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub tp: u64,
    pub fp: u64,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionScores {
    pub per_label: BTreeMap<String, LabelScore>,
    pub micro: LabelScore,
    pub per_category: BTreeMap<String, CategoryScore>,
}

pub fn evaluate_extractions(pred: &[LabeledRecord], gold: &[LabeledRecord]) -> Result<ExtractionScores, ExtractionError> {
    let key = |r: &LabeledRecord| (r.note_id.clone(), r.target);
    let gold_by: BTreeMap<_, _> = gold.iter().map(|g| (key(g), g)).collect();
    let pred_keys: BTreeSet<_> = pred.iter().map(key).collect();
    let missing_pred: Vec<String> = gold_by
        .keys()
        .filter(|k| !pred_keys.contains(*k))
        .map(|(n, t)| format!("{n}/{t}"))
        .collect();
    let missing_gold: Vec<String> = pred_keys
        .iter()
        .filter(|k| !gold_by.contains_key(*k))
        .map(|(n, t)| format!("{n}/{t}"))
        .collect();
    if !missing_pred.is_empty() || !missing_gold.is_empty() || pred_keys.len() != pred.len() {
        return Err(ExtractionError::AlignmentError { missing_predictions: missing_pred, missing_gold });
    }

    let mut per_label: BTreeMap<String, ConfusionCounts> = BTreeMap::new();
    for p in pred {
        let g = gold_by[&key(p)];
        if p.record.target() != g.record.target() {
            return Err(ExtractionError::AlignmentError {
                missing_predictions: vec![format!("{}/{} has a {} record", p.note_id, p.target, p.record.target())],
                missing_gold: Vec::new(),
            });
        }
        for ((name, pv), (_, gv)) in label_values(&p.record).iter().zip(label_values(&g.record).iter()) {
            record_label(per_label.entry(name.to_string()).or_default(), pv, gv);
        }
    }

    let mut micro = ConfusionCounts::default();
    for (name, c) in &per_label {
        // the derived "any" label would double count died/hospice
        if !name.ends_with(".any") {
            micro.merge(c);
        }
    }
    let per_category = CATEGORIES
        .iter()
        .map(|(cat, label)| {
            let c = per_label.get(*label).copied().unwrap_or_default();
            let precision = metrics_from_confusion(&c).ok().and_then(|m| m.precision);
            (cat.to_string(), CategoryScore { tp: c.tp, fp: c.fp, precision })
        })
        .collect();
    Ok(ExtractionScores {
        per_label: per_label
            .into_iter()
            .map(|(k, c)| (k, LabelScore { counts: c, metrics: metrics_from_confusion(&c).ok() }))
            .collect(),
        micro: LabelScore { counts: micro, metrics: metrics_from_confusion(&micro).ok() },
        per_category,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::schema::{OutcomeRecord, PhenotypeRecord, TStage};

    fn lab(note: &str, record: Record) -> LabeledRecord {
        LabeledRecord { note_id: note.into(), target: record.target(), record }
    }

    fn died(b: bool) -> Record {
        let mut o = OutcomeRecord::default();
        o.death_hospice.died = b;
        Record::Outcome(o)
    }

    #[test]
    fn death_category_counts() {
        let pred = vec![lab("a", died(true)), lab("b", died(true)), lab("c", died(false))];
        let gold = vec![lab("a", died(true)), lab("b", died(false)), lab("c", died(true))];
        let s = evaluate_extractions(&pred, &gold).unwrap();
        let d = &s.per_category["death"];
        assert_eq!((d.tp, d.fp), (1, 1));
        assert_eq!(d.precision, Some(0.5));
        assert_eq!(s.per_label["death_hospice.died"].counts.fn_, 1);
    }

    #[test]
    fn wrong_value_is_false_positive() {
        let p = Record::Phenotype(PhenotypeRecord { t_stage: Some(TStage::T3), ..Default::default() });
        let g = Record::Phenotype(PhenotypeRecord { t_stage: Some(TStage::T2), ..Default::default() });
        let s = evaluate_extractions(&[lab("a", p)], &[lab("a", g)]).unwrap();
        let c = s.per_label["t_stage"].counts;
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (0, 1, 0, 0));
        // receptors both unknown: true negatives
        assert_eq!(s.per_label["er"].counts.tn, 1);
    }

    #[test]
    fn misaligned_inputs() {
        let err = evaluate_extractions(&[lab("a", died(true))], &[lab("b", died(true))]).unwrap_err();
        let ExtractionError::AlignmentError { missing_predictions, missing_gold } = err else { panic!() };
        assert_eq!(missing_predictions, vec!["b/outcome".to_string()]);
        assert_eq!(missing_gold, vec!["a/outcome".to_string()]);
    }

    #[test]
    fn micro_is_sum_of_labels() {
        let pred = vec![lab("a", died(true)), lab("b", died(false))];
        let gold = vec![lab("a", died(true)), lab("b", died(true))];
        let s = evaluate_extractions(&pred, &gold).unwrap();
        let total: u64 = s
            .per_label
            .iter()
            .filter(|(k, _)| !k.ends_with(".any"))
            .map(|(_, l)| l.counts.population())
            .sum();
        assert_eq!(s.micro.counts.population(), total);
        assert_eq!(total, 2 * 8);
    }
}

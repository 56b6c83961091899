//! Drug combinations as features, filtered by patient support.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::emr::{ApprovedDrug, TreatmentPlan};

pub const DEFAULT_SUPPORT_THRESHOLD: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Combination {
    pub drugs: Vec<String>,
    pub patient_support: usize,
}

impl Combination {
    pub fn key(&self) -> String {
        self.drugs.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimenCatalog {
    pub support_threshold: usize,
    /// Retained combinations, ordered by key.
    pub combinations: Vec<Combination>,
    pub observed_combinations: usize,
    /// Approved drugs seen in at least one plan, sorted.
    pub drugs: Vec<String>,
    pub approved: Vec<ApprovedDrug>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRegimen {
    pub drugs: BTreeSet<String>,
    /// Key of the patient's combination when it is retained.
    pub combination: Option<String>,
    /// At least one plan drug is not on the approved list.
    pub other: bool,
}

/// Longest approved code that prefixes `gpi8`.
pub fn match_drug<'a>(gpi8: &str, approved: &'a [ApprovedDrug]) -> Option<&'a ApprovedDrug> {
    approved.iter().filter(|a| gpi8.starts_with(&a.gpi8)).max_by_key(|a| a.gpi8.len())
}

/// `plans` holds one plan per patient.
pub fn build_regimen_features(
    plans: &[&TreatmentPlan],
    approved: &[ApprovedDrug],
    support_threshold: usize,
) -> (RegimenCatalog, BTreeMap<String, PatientRegimen>) {
    let mut per_patient = BTreeMap::new();
    let mut support: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    let mut combos = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for plan in plans {
        let mut reg = PatientRegimen::default();
        for d in &plan.drugs {
            match match_drug(&d.gpi8, approved) {
                Some(a) => {
                    reg.drugs.insert(a.name.clone());
                }
                None => {
                    log::warn!("patient {}: drug {} ({}) not on the approved list", plan.patient_id, d.name, d.gpi8);
                    reg.other = true;
                }
            }
        }
        let combo: Vec<String> = reg.drugs.iter().cloned().collect();
        if !combo.is_empty() {
            *support.entry(combo.clone()).or_default() += 1;
            combos.insert(plan.patient_id.clone(), combo);
        }
        seen.extend(reg.drugs.iter().cloned());
        per_patient.insert(plan.patient_id.clone(), reg);
    }
    let mut combinations: Vec<Combination> = support
        .iter()
        .filter(|(_, &n)| n >= support_threshold)
        .map(|(drugs, &n)| Combination { drugs: drugs.clone(), patient_support: n })
        .collect();
    combinations.sort_by_key(|c| c.key());
    for (pid, combo) in combos {
        if support[&combo] >= support_threshold {
            per_patient.get_mut(&pid).unwrap().combination = Some(combo.join("+"));
        }
    }
    let catalog = RegimenCatalog {
        support_threshold,
        combinations,
        observed_combinations: support.len(),
        drugs: seen.into_iter().collect(),
        approved: approved.to_vec(),
    };
    (catalog, per_patient)
}

//! Numeric encodings for categorical and ordinal fields.
//!
//! Missing values are `MISSING` (-1). Explicit not-assessable codes (TX,
//! NX, MX, GX) are `NOT_ASSESSABLE` (-2). Every table decodes back to
//! the value it encoded.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::extraction::schema::{Biomarker, Grade, MStage, NStage, StageGroup, TStage};

pub const MISSING: f64 = -1.0;
pub const NOT_ASSESSABLE: f64 = -2.0;

pub const T_STAGE: &[(TStage, f64)] = &[
    (TStage::T0, 0.0),
    (TStage::Tis, 1.0),
    (TStage::T1, 2.0),
    (TStage::T2, 3.0),
    (TStage::T3, 4.0),
    (TStage::T4, 5.0),
    (TStage::TX, NOT_ASSESSABLE),
];

pub const N_STAGE: &[(NStage, f64)] =
    &[(NStage::N0, 0.0), (NStage::N1, 1.0), (NStage::N2, 2.0), (NStage::N3, 3.0), (NStage::NX, NOT_ASSESSABLE)];

pub const M_STAGE: &[(MStage, f64)] = &[(MStage::M0, 0.0), (MStage::M1, 1.0), (MStage::MX, NOT_ASSESSABLE)];

pub const STAGE_GROUP: &[(StageGroup, f64)] = &[
    (StageGroup::S0, 0.0),
    (StageGroup::I, 10.0),
    (StageGroup::IA, 11.0),
    (StageGroup::IB, 12.0),
    (StageGroup::II, 20.0),
    (StageGroup::IIA, 21.0),
    (StageGroup::IIB, 22.0),
    (StageGroup::III, 30.0),
    (StageGroup::IIIA, 31.0),
    (StageGroup::IIIB, 32.0),
    (StageGroup::IIIC, 33.0),
    (StageGroup::IV, 40.0),
];

pub const GRADE: &[(Grade, f64)] =
    &[(Grade::G1, 1.0), (Grade::G2, 2.0), (Grade::G3, 3.0), (Grade::G4, 4.0), (Grade::GX, NOT_ASSESSABLE)];

/// Unknown status is a missing value, not a third level.
pub const BIOMARKER: &[(Biomarker, f64)] =
    &[(Biomarker::Positive, 1.0), (Biomarker::Negative, 0.0), (Biomarker::Unknown, MISSING)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Other,
}

pub const GENDER: &[(Gender, f64)] = &[(Gender::Female, 0.0), (Gender::Male, 1.0), (Gender::Other, 2.0)];

impl Gender {
    pub fn parse(s: &str) -> Gender {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" | "woman" => Gender::Female,
            "m" | "male" | "man" => Gender::Male,
            _ => Gender::Other,
        }
    }
}

pub fn encode<T: PartialEq + Copy>(table: &[(T, f64)], v: Option<T>) -> f64 {
    match v {
        None => MISSING,
        Some(v) => table.iter().find(|(k, _)| *k == v).map(|(_, c)| *c).expect("value missing from its code table"),
    }
}

/// `None` for `MISSING` and for codes outside the table.
pub fn decode<T: Copy>(table: &[(T, f64)], code: f64) -> Option<T> {
    table.iter().find(|(_, c)| *c == code).map(|(k, _)| *k)
}

pub fn encode_biomarker(b: Biomarker) -> f64 {
    encode(BIOMARKER, Some(b))
}

pub fn decode_biomarker(code: f64) -> Biomarker {
    decode(BIOMARKER, code).unwrap_or(Biomarker::Unknown)
}

pub fn encode_number(v: Option<f64>) -> f64 {
    v.unwrap_or(MISSING)
}

/// (label, code) pairs for the data dictionary.
pub fn mapping<T: Copy + std::fmt::Display>(table: &[(T, f64)]) -> Vec<(String, f64)> {
    table.iter().map(|(k, c)| (k.to_string(), *c)).collect()
}

impl std::fmt::Display for Gender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Other => "other",
        })
    }
}

/// ICD-10 prefix table for Elixhauser comorbidity groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ElixhauserTable {
    groups: Vec<(String, Vec<String>)>,
}

static BUILTIN: LazyLock<ElixhauserTable> = LazyLock::new(|| {
    ElixhauserTable::parse(include_str!("../../fixtures/elixhauser_icd10.csv")).expect("bundled Elixhauser table")
});

impl ElixhauserTable {
    pub fn builtin() -> &'static ElixhauserTable {
        &BUILTIN
    }

    /// `group,prefixes` with space-separated prefixes.
    pub fn parse(text: &str) -> Result<ElixhauserTable, String> {
        let mut groups = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let (g, p) = line.split_once(',').ok_or_else(|| format!("line {}: expected group,prefixes", i + 1))?;
            let prefixes: Vec<String> = p.split_whitespace().map(str::to_string).collect();
            if prefixes.is_empty() {
                return Err(format!("line {}: group {g} has no prefixes", i + 1));
            }
            groups.push((g.trim().to_string(), prefixes));
        }
        Ok(ElixhauserTable { groups })
    }

    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|(g, _)| g.as_str())
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// One flag per group. Codes are compared without dots.
    pub fn flags(&self, codes: &[String]) -> Vec<bool> {
        self.groups
            .iter()
            .map(|(_, prefixes)| codes.iter().any(|c| prefixes.iter().any(|p| c.starts_with(p.as_str()))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trips<T: PartialEq + Copy + std::fmt::Debug>(table: &[(T, f64)], all: &[T]) {
        assert_eq!(table.len(), all.len());
        for &v in all {
            assert_eq!(decode(table, encode(table, Some(v))), Some(v));
        }
        assert_eq!(encode(table, None::<T>), MISSING);
        let mut codes: Vec<f64> = table.iter().map(|(_, c)| *c).collect();
        codes.sort_by(f64::total_cmp);
        codes.dedup();
        assert_eq!(codes.len(), table.len(), "codes must be distinct");
    }

    #[test]
    fn tables_round_trip() {
        round_trips(T_STAGE, TStage::ALL);
        round_trips(N_STAGE, NStage::ALL);
        round_trips(M_STAGE, MStage::ALL);
        round_trips(STAGE_GROUP, StageGroup::ALL);
        round_trips(GRADE, Grade::ALL);
        round_trips(GENDER, &[Gender::Female, Gender::Male, Gender::Other]);
        for &b in Biomarker::ALL {
            assert_eq!(decode_biomarker(encode_biomarker(b)), b);
        }
    }

    #[test]
    fn documented_codes() {
        assert_eq!(encode_biomarker(Biomarker::Positive), 1.0);
        assert_eq!(encode_biomarker(Biomarker::Negative), 0.0);
        assert_eq!(encode_biomarker(Biomarker::Unknown), MISSING);
        assert_eq!(encode(T_STAGE, Some(TStage::T2)), 3.0);
        assert_eq!(encode(STAGE_GROUP, Some(StageGroup::IIIB)), 32.0);
        assert_eq!(encode(M_STAGE, Some(MStage::MX)), NOT_ASSESSABLE);
        assert_eq!(Gender::parse(" F "), Gender::Female);
    }

    #[test]
    fn ordinals_preserve_order() {
        let ordered = [TStage::T0, TStage::Tis, TStage::T1, TStage::T2, TStage::T3, TStage::T4];
        for w in ordered.windows(2) {
            assert!(encode(T_STAGE, Some(w[0])) < encode(T_STAGE, Some(w[1])));
        }
    }

    #[test]
    fn elixhauser_flags() {
        let t = ElixhauserTable::builtin();
        assert_eq!(t.len(), 31);
        let groups: Vec<&str> = t.groups().collect();
        let flags = t.flags(&["I10".into(), "E119".into(), "C509".into()]);
        let on: Vec<&str> = groups.iter().zip(&flags).filter(|(_, f)| **f).map(|(g, _)| *g).collect();
        assert_eq!(on, vec!["hypertension_uncomplicated", "diabetes_uncomplicated", "solid_tumor_without_metastasis"]);
        assert!(t.flags(&[]).iter().all(|f| !f));
    }
}

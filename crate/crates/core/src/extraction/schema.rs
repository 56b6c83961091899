//! Extraction record types, their JSON schemas and the validator that turns
//! raw model text into typed records.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

macro_rules! vocab {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $s)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $s),+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $($s => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

vocab!(TStage { T0 => "T0", T1 => "T1", T2 => "T2", T3 => "T3", T4 => "T4", Tis => "Tis", TX => "TX" });
vocab!(NStage { N0 => "N0", N1 => "N1", N2 => "N2", N3 => "N3", NX => "NX" });
vocab!(MStage { M0 => "M0", M1 => "M1", MX => "MX" });
vocab!(StageGroup {
    S0 => "0", I => "I", IA => "IA", IB => "IB", II => "II", IIA => "IIA", IIB => "IIB",
    III => "III", IIIA => "IIIA", IIIB => "IIIB", IIIC => "IIIC", IV => "IV",
});
vocab!(Grade { G1 => "G1", G2 => "G2", G3 => "G3", G4 => "G4", GX => "GX" });
vocab!(Biomarker { Positive => "positive", Negative => "negative", Unknown => "unknown" });
vocab!(
    /// What a request extracts.
    Target { Phenotype => "phenotype", Outcome => "outcome" }
);

impl Target {
    pub fn schema_id(self) -> &'static str {
        match self {
            Target::Phenotype => PHENOTYPE_SCHEMA_ID,
            Target::Outcome => OUTCOME_SCHEMA_ID,
        }
    }
}

pub const PHENOTYPE_SCHEMA_ID: &str = "phenotype.v1";
pub const OUTCOME_SCHEMA_ID: &str = "outcome.v1";

pub const TUMOR_SIZE_LIMIT_CM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhenotypeRecord {
    pub t_stage: Option<TStage>,
    pub n_stage: Option<NStage>,
    pub m_stage: Option<MStage>,
    pub stage_group: Option<StageGroup>,
    pub tumor_size_cm: Option<f64>,
    pub grade: Option<Grade>,
    pub ecog: Option<u8>,
    pub karnofsky: Option<u8>,
    pub er: Biomarker,
    pub pr: Biomarker,
    pub her2: Biomarker,
}

impl Default for PhenotypeRecord {
    fn default() -> Self {
        PhenotypeRecord {
            t_stage: None,
            n_stage: None,
            m_stage: None,
            stage_group: None,
            tumor_size_cm: None,
            grade: None,
            ecog: None,
            karnofsky: None,
            er: Biomarker::Unknown,
            pr: Biomarker::Unknown,
            her2: Biomarker::Unknown,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Progression {
    pub progressed: bool,
    pub discontinued: bool,
    pub details: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Toxicity {
    pub adverse_effects: bool,
    pub qol_deterioration: bool,
    pub discontinued_or_modified: bool,
    pub details: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeathHospice {
    pub died: bool,
    pub hospice: bool,
    pub event_date: Option<NaiveDate>,
    pub details: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeRecord {
    pub progression: Progression,
    pub toxicity: Toxicity,
    pub death_hospice: DeathHospice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Record {
    Phenotype(PhenotypeRecord),
    Outcome(OutcomeRecord),
}

impl Record {
    pub fn target(&self) -> Target {
        match self {
            Record::Phenotype(_) => Target::Phenotype,
            Record::Outcome(_) => Target::Outcome,
        }
    }

    /// The all-null / all-false record for a target.
    pub fn empty(target: Target) -> Record {
        match target {
            Target::Phenotype => Record::Phenotype(PhenotypeRecord::default()),
            Target::Outcome => Record::Outcome(OutcomeRecord::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Violation { field: field.into(), reason: reason.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationFailure {
    #[error("no JSON object found in model output")]
    NoJsonFound,
    #[error("unknown schema id {0}")]
    UnknownSchema(String),
    #[error("schema violation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    SchemaViolation(Vec<Violation>),
}

pub fn target_for_schema(schema_id: &str) -> Option<Target> {
    match schema_id {
        PHENOTYPE_SCHEMA_ID => Some(Target::Phenotype),
        OUTCOME_SCHEMA_ID => Some(Target::Outcome),
        _ => None,
    }
}

fn enum_schema<T: Copy + fmt::Display>(all: &[T]) -> Value {
    let mut vals: Vec<Value> = all.iter().map(|v| Value::String(v.to_string())).collect();
    vals.push(Value::Null);
    json!({ "enum": vals })
}

/// JSON Schema document for a target, as shown to the model.
pub fn schema_json(target: Target) -> Value {
    match target {
        Target::Phenotype => {
            let biomarker = json!({ "enum": Biomarker::ALL.iter().map(|b| b.as_str()).collect::<Vec<_>>() });
            json!({
                "$id": PHENOTYPE_SCHEMA_ID,
                "type": "object",
                "additionalProperties": false,
                "required": PHENOTYPE_KEYS,
                "properties": {
                    "t_stage": enum_schema(TStage::ALL),
                    "n_stage": enum_schema(NStage::ALL),
                    "m_stage": enum_schema(MStage::ALL),
                    "stage_group": enum_schema(StageGroup::ALL),
                    "tumor_size_cm": { "type": ["number", "null"], "minimum": 0, "exclusiveMaximum": TUMOR_SIZE_LIMIT_CM },
                    "grade": enum_schema(Grade::ALL),
                    "ecog": { "type": ["integer", "null"], "minimum": 0, "maximum": 5 },
                    "karnofsky": { "type": ["integer", "null"], "minimum": 0, "maximum": 100, "multipleOf": 10 },
                    "er": biomarker,
                    "pr": biomarker,
                    "her2": biomarker,
                }
            })
        }
        Target::Outcome => {
            let text = json!({ "type": "string" });
            let flag = json!({ "type": "boolean" });
            json!({
                "$id": OUTCOME_SCHEMA_ID,
                "type": "object",
                "additionalProperties": false,
                "required": OUTCOME_KEYS,
                "properties": {
                    "progression": {
                        "type": "object", "additionalProperties": false,
                        "required": PROGRESSION_KEYS,
                        "properties": { "progressed": flag, "discontinued": flag, "details": text }
                    },
                    "toxicity": {
                        "type": "object", "additionalProperties": false,
                        "required": TOXICITY_KEYS,
                        "properties": {
                            "adverse_effects": flag, "qol_deterioration": flag,
                            "discontinued_or_modified": flag, "details": text
                        }
                    },
                    "death_hospice": {
                        "type": "object", "additionalProperties": false,
                        "required": DEATH_KEYS,
                        "properties": {
                            "died": flag, "hospice": flag,
                            "event_date": { "type": ["string", "null"], "format": "date" },
                            "details": text
                        }
                    }
                }
            })
        }
    }
}

const PHENOTYPE_KEYS: &[&str] = &[
    "t_stage", "n_stage", "m_stage", "stage_group", "tumor_size_cm", "grade", "ecog", "karnofsky", "er", "pr", "her2",
];
const OUTCOME_KEYS: &[&str] = &["progression", "toxicity", "death_hospice"];
const PROGRESSION_KEYS: &[&str] = &["progressed", "discontinued", "details"];
const TOXICITY_KEYS: &[&str] = &["adverse_effects", "qol_deterioration", "discontinued_or_modified", "details"];
const DEATH_KEYS: &[&str] = &["died", "hospice", "event_date", "details"];

/// Locates the first balanced JSON object in `raw`, skipping code fences
/// or prose around it.
pub fn extract_first_json(raw: &str) -> Option<Map<String, Value>> {
    let bytes = raw.as_bytes();
    let mut from = 0;
    while let Some(rel) = raw[from..].find('{') {
        let start = from + rel;
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        let mut end = None;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let end = end?;
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&raw[start..=end]) {
            return Some(map);
        }
        from = start + 1;
    }
    None
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn keys(&mut self, prefix: &str, obj: &Map<String, Value>, required: &[&str]) {
        for k in obj.keys() {
            if !required.contains(&k.as_str()) {
                self.violations.push(Violation::new(format!("{prefix}{k}"), "unknown key"));
            }
        }
        for k in required {
            if !obj.contains_key(*k) {
                self.violations.push(Violation::new(format!("{prefix}{k}"), "missing required key"));
            }
        }
    }

    fn vocab<T: Copy + fmt::Display>(&mut self, field: &str, v: Option<&Value>, all: &[T], nullable: bool) {
        let Some(v) = v else { return };
        match v {
            Value::Null if nullable => {}
            Value::String(s) if all.iter().any(|x| x.to_string() == *s) => {}
            _ => {
                let allowed: Vec<String> = all.iter().map(|x| x.to_string()).collect();
                self.violations.push(Violation::new(
                    field,
                    format!("{v} is not one of [{}]{}", allowed.join(", "), if nullable { " or null" } else { "" }),
                ));
            }
        }
    }

    fn int(&mut self, field: &str, v: Option<&Value>, max: u64, step: u64) {
        let Some(v) = v else { return };
        if v.is_null() {
            return;
        }
        match v.as_u64() {
            Some(n) if n > max => self.violations.push(Violation::new(field, format!("{n} out of range 0..={max}"))),
            Some(n) if n % step != 0 => self.violations.push(Violation::new(field, format!("{n} is not a multiple of {step}"))),
            Some(_) => {}
            None => self.violations.push(Violation::new(field, format!("{v} is not a non-negative integer or null"))),
        }
    }

    fn size(&mut self, field: &str, v: Option<&Value>) {
        let Some(v) = v else { return };
        if v.is_null() {
            return;
        }
        match v.as_f64() {
            Some(x) if (0.0..TUMOR_SIZE_LIMIT_CM).contains(&x) => {}
            Some(x) => self.violations.push(Violation::new(field, format!("{x} out of range [0, {TUMOR_SIZE_LIMIT_CM})"))),
            None => self.violations.push(Violation::new(field, format!("{v} is not a number or null"))),
        }
    }

    fn flag(&mut self, field: &str, v: Option<&Value>) {
        if let Some(v) = v {
            if !v.is_boolean() {
                self.violations.push(Violation::new(field, format!("{v} is not a boolean")));
            }
        }
    }

    fn text(&mut self, field: &str, v: Option<&Value>) {
        if let Some(v) = v {
            if !v.is_string() {
                self.violations.push(Violation::new(field, format!("{v} is not a string")));
            }
        }
    }

    fn object<'a>(&mut self, field: &str, v: Option<&'a Value>) -> Option<&'a Map<String, Value>> {
        match v {
            Some(Value::Object(m)) => Some(m),
            Some(other) => {
                self.violations.push(Violation::new(field, format!("{other} is not an object")));
                None
            }
            None => None,
        }
    }
}

fn check_phenotype(obj: &Map<String, Value>) -> Vec<Violation> {
    let mut c = Checker { violations: Vec::new() };
    c.keys("", obj, PHENOTYPE_KEYS);
    c.vocab("t_stage", obj.get("t_stage"), TStage::ALL, true);
    c.vocab("n_stage", obj.get("n_stage"), NStage::ALL, true);
    c.vocab("m_stage", obj.get("m_stage"), MStage::ALL, true);
    c.vocab("stage_group", obj.get("stage_group"), StageGroup::ALL, true);
    c.size("tumor_size_cm", obj.get("tumor_size_cm"));
    c.vocab("grade", obj.get("grade"), Grade::ALL, true);
    c.int("ecog", obj.get("ecog"), 5, 1);
    c.int("karnofsky", obj.get("karnofsky"), 100, 10);
    for k in ["er", "pr", "her2"] {
        c.vocab(k, obj.get(k), Biomarker::ALL, false);
    }
    c.violations
}

fn check_outcome(obj: &Map<String, Value>) -> Vec<Violation> {
    let mut c = Checker { violations: Vec::new() };
    c.keys("", obj, OUTCOME_KEYS);
    if let Some(p) = c.object("progression", obj.get("progression")) {
        c.keys("progression.", p, PROGRESSION_KEYS);
        c.flag("progression.progressed", p.get("progressed"));
        c.flag("progression.discontinued", p.get("discontinued"));
        c.text("progression.details", p.get("details"));
    }
    if let Some(t) = c.object("toxicity", obj.get("toxicity")) {
        c.keys("toxicity.", t, TOXICITY_KEYS);
        for k in ["adverse_effects", "qol_deterioration", "discontinued_or_modified"] {
            c.flag(&format!("toxicity.{k}"), t.get(k));
        }
        c.text("toxicity.details", t.get("details"));
    }
    if let Some(d) = c.object("death_hospice", obj.get("death_hospice")) {
        c.keys("death_hospice.", d, DEATH_KEYS);
        c.flag("death_hospice.died", d.get("died"));
        c.flag("death_hospice.hospice", d.get("hospice"));
        c.text("death_hospice.details", d.get("details"));
        match d.get("event_date") {
            None | Some(Value::Null) => {}
            Some(Value::String(s)) => {
                if NaiveDate::parse_from_str(s, "%Y-%m-%d").is_err() {
                    c.violations.push(Violation::new("death_hospice.event_date", format!("{s:?} is not an ISO-8601 date")));
                } else {
                    let died = d.get("died").and_then(Value::as_bool).unwrap_or(false);
                    let hospice = d.get("hospice").and_then(Value::as_bool).unwrap_or(false);
                    if !died && !hospice {
                        c.violations.push(Violation::new(
                            "death_hospice.event_date",
                            "event_date requires died or hospice to be true",
                        ));
                    }
                }
            }
            Some(other) => c.violations.push(Violation::new("death_hospice.event_date", format!("{other} is not a date string or null"))),
        }
    }
    c.violations
}

/// Validates a parsed JSON object against a target's schema.
pub fn validate_object(obj: &Map<String, Value>, target: Target) -> Result<Record, ValidationFailure> {
    let violations = match target {
        Target::Phenotype => check_phenotype(obj),
        Target::Outcome => check_outcome(obj),
    };
    if !violations.is_empty() {
        return Err(ValidationFailure::SchemaViolation(violations));
    }
    let value = Value::Object(obj.clone());
    let rec = match target {
        Target::Phenotype => serde_json::from_value(value).map(Record::Phenotype),
        Target::Outcome => serde_json::from_value(value).map(Record::Outcome),
    };
    rec.map_err(|e| ValidationFailure::SchemaViolation(vec![Violation::new("$", e.to_string())]))
}

/// Extracts the first JSON object from model output and validates it.
pub fn parse_and_validate(raw: &str, schema_id: &str) -> Result<Record, ValidationFailure> {
    let target = target_for_schema(schema_id).ok_or_else(|| ValidationFailure::UnknownSchema(schema_id.to_string()))?;
    let obj = extract_first_json(raw).ok_or(ValidationFailure::NoJsonFound)?;
    validate_object(&obj, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phenotype_json() -> Value {
        json!({
            "t_stage": "T2", "n_stage": "N1", "m_stage": "M0", "stage_group": "IIB",
            "tumor_size_cm": 2.4, "grade": "G2", "ecog": 1, "karnofsky": 90,
            "er": "positive", "pr": "negative", "her2": "unknown"
        })
    }

    fn outcome_json() -> Value {
        json!({
            "progression": {"progressed": true, "discontinued": true, "details": "progression on CT"},
            "toxicity": {"adverse_effects": false, "qol_deterioration": false, "discontinued_or_modified": false, "details": ""},
            "death_hospice": {"died": false, "hospice": false, "event_date": null, "details": ""}
        })
    }

    #[test]
    fn valid_phenotype_parses() {
        let rec = parse_and_validate(&phenotype_json().to_string(), PHENOTYPE_SCHEMA_ID).unwrap();
        let Record::Phenotype(p) = rec else { panic!() };
        assert_eq!(p.er, Biomarker::Positive);
        assert_eq!(p.stage_group, Some(StageGroup::IIB));
        assert_eq!(p.karnofsky, Some(90));
    }

    #[test]
    fn ecog_out_of_range() {
        let mut v = phenotype_json();
        v["ecog"] = json!(9);
        let err = parse_and_validate(&v.to_string(), PHENOTYPE_SCHEMA_ID).unwrap_err();
        let ValidationFailure::SchemaViolation(vs) = err else { panic!() };
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].field, "ecog");
        assert!(vs[0].reason.contains("out of range"));
    }

    #[test]
    fn karnofsky_must_be_tens() {
        let mut v = phenotype_json();
        v["karnofsky"] = json!(85);
        assert!(matches!(
            parse_and_validate(&v.to_string(), PHENOTYPE_SCHEMA_ID),
            Err(ValidationFailure::SchemaViolation(ref vs)) if vs[0].field == "karnofsky"
        ));
    }

    #[test]
    fn unknown_and_missing_keys() {
        let mut v = phenotype_json();
        v.as_object_mut().unwrap().remove("grade");
        v["confidence"] = json!(0.9);
        let ValidationFailure::SchemaViolation(vs) = parse_and_validate(&v.to_string(), PHENOTYPE_SCHEMA_ID).unwrap_err() else {
            panic!()
        };
        let fields: Vec<_> = vs.iter().map(|v| v.field.as_str()).collect();
        assert!(fields.contains(&"confidence") && fields.contains(&"grade"));
    }

    #[test]
    fn enum_membership_enforced() {
        let mut v = phenotype_json();
        v["t_stage"] = json!("T5");
        v["er"] = json!(null);
        let ValidationFailure::SchemaViolation(vs) = parse_and_validate(&v.to_string(), PHENOTYPE_SCHEMA_ID).unwrap_err() else {
            panic!()
        };
        assert_eq!(vs.iter().map(|v| v.field.as_str()).collect::<Vec<_>>(), vec!["t_stage", "er"]);
    }

    #[test]
    fn fenced_output_parses_like_bare_json() {
        let bare = outcome_json().to_string();
        let fenced = format!("Sure, here is the extraction:\n```json\n{}\n```\nLet me know!", serde_json::to_string_pretty(&outcome_json()).unwrap());
        // oracle: strip the fence by hand and compare parses
        let inner = fenced.split("```json").nth(1).unwrap().split("```").next().unwrap();
        let a = parse_and_validate(&bare, OUTCOME_SCHEMA_ID).unwrap();
        let b = parse_and_validate(&fenced, OUTCOME_SCHEMA_ID).unwrap();
        let c = parse_and_validate(inner, OUTCOME_SCHEMA_ID).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_scanner() {
        let mut v = outcome_json();
        v["progression"]["details"] = json!("new lesion {segment 4} noted \"}\"");
        let raw = format!("{{not json}} {}", v);
        assert!(parse_and_validate(&raw, OUTCOME_SCHEMA_ID).is_ok());
    }

    #[test]
    fn no_json() {
        assert_eq!(parse_and_validate("I could not find anything.", OUTCOME_SCHEMA_ID), Err(ValidationFailure::NoJsonFound));
        assert_eq!(parse_and_validate("{ unterminated", OUTCOME_SCHEMA_ID), Err(ValidationFailure::NoJsonFound));
    }

    #[test]
    fn event_date_requires_death_or_hospice() {
        let mut v = outcome_json();
        v["death_hospice"]["event_date"] = json!("2021-03-07");
        assert!(matches!(
            parse_and_validate(&v.to_string(), OUTCOME_SCHEMA_ID),
            Err(ValidationFailure::SchemaViolation(ref vs)) if vs[0].field == "death_hospice.event_date"
        ));
        v["death_hospice"]["hospice"] = json!(true);
        assert!(parse_and_validate(&v.to_string(), OUTCOME_SCHEMA_ID).is_ok());
    }

    #[test]
    fn nested_type_errors_are_reported_with_paths() {
        let mut v = outcome_json();
        v["toxicity"]["adverse_effects"] = json!("yes");
        v["toxicity"]["extra"] = json!(1);
        let ValidationFailure::SchemaViolation(vs) = parse_and_validate(&v.to_string(), OUTCOME_SCHEMA_ID).unwrap_err() else {
            panic!()
        };
        let fields: Vec<_> = vs.iter().map(|v| v.field.as_str()).collect();
        assert!(fields.contains(&"toxicity.extra") && fields.contains(&"toxicity.adverse_effects"));
    }

    #[test]
    fn schema_documents_match_validator_keys() {
        for (target, keys) in [(Target::Phenotype, PHENOTYPE_KEYS), (Target::Outcome, OUTCOME_KEYS)] {
            let s = schema_json(target);
            let mut props: Vec<&str> = s["properties"].as_object().unwrap().keys().map(String::as_str).collect();
            let mut expected = keys.to_vec();
            props.sort();
            expected.sort();
            assert_eq!(props, expected);
        }
    }

    #[test]
    fn default_records_validate() {
        for t in Target::ALL {
            let v = serde_json::to_value(Record::empty(*t)).unwrap();
            assert!(validate_object(v.as_object().unwrap(), *t).is_ok());
        }
    }
}

//! Feature vectors, survival labels, data dictionary and cohort summary.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::extraction::schema::{Biomarker, Grade, MStage, NStage, OutcomeRecord, PhenotypeRecord, Record, StageGroup, TStage};
use crate::extraction::ExtractionLine;
use crate::survival::{FeatureMatrix, SurvivalData, SurvivalRecord};

use super::emr::{first_plans, ApprovedDrug, EmrRow, TreatmentPlan};
use super::encode::{self, encode, ElixhauserTable, Gender, MISSING};
use super::failure::{derive_failure, time_to_event, FailureCause};
use super::regimen::{build_regimen_features, PatientRegimen, RegimenCatalog, DEFAULT_SUPPORT_THRESHOLD};
use super::CohortError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    pub support_threshold: usize,
    /// Fail instead of dropping patients missing from a source.
    pub strict_alignment: bool,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig { support_threshold: DEFAULT_SUPPORT_THRESHOLD, strict_alignment: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub patient_id: String,
    pub age: f64,
    pub gender: Gender,
    pub bsa: Option<f64>,
    pub srcr: Option<f64>,
    pub readmission_score: Option<f64>,
    /// One flag per Elixhauser group, in table order.
    pub comorbidities: Vec<bool>,
    pub phenotype: PhenotypeRecord,
    /// Milligrams per week summed over the plan's drugs.
    pub dose_per_week: Option<f64>,
    pub weeks: u32,
    pub regimen: PatientRegimen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSurvival {
    pub patient_id: String,
    pub time_days: u32,
    pub event: bool,
    pub event_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub causes: Vec<FailureCause>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub patient_id: String,
    pub field: String,
    pub emr: String,
    pub extracted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Ordinal,
    Categorical,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub missing_marker: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub codes: Vec<(String, f64)>,
}

impl ColumnInfo {
    fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnInfo { name: name.into(), kind, unit: None, missing_marker: None, codes: Vec::new() }
    }

    fn unit(mut self, u: &str) -> Self {
        self.unit = Some(u.into());
        self
    }

    fn missing(mut self) -> Self {
        self.missing_marker = Some(MISSING);
        self
    }

    fn codes(mut self, codes: Vec<(String, f64)>) -> Self {
        self.codes = codes;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimenFailure {
    pub regimen: String,
    pub patients: usize,
    pub failures: usize,
    pub failure_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n: usize,
    pub events: usize,
    pub failure_prevalence: Option<f64>,
    pub support_threshold: usize,
    pub observed_combinations: usize,
    pub retained_combinations: usize,
    pub regimens: Vec<RegimenFailure>,
    pub orphans: Vec<String>,
    pub conflicts: usize,
    pub excluded_doses: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub columns: Vec<ColumnInfo>,
    pub features: Vec<FeatureVector>,
    pub rows: Vec<Vec<f64>>,
    pub survival: Vec<PatientSurvival>,
    pub catalog: RegimenCatalog,
    pub conflicts: Vec<Conflict>,
    pub summary: CohortSummary,
}

/// First non-null value per field, scanning records in the given order.
/// Unknown biomarker status counts as null.
pub fn merge_phenotypes<'a>(records: impl IntoIterator<Item = &'a PhenotypeRecord>) -> PhenotypeRecord {
    let mut m = PhenotypeRecord::default();
    for r in records {
        m.t_stage = m.t_stage.or(r.t_stage);
        m.n_stage = m.n_stage.or(r.n_stage);
        m.m_stage = m.m_stage.or(r.m_stage);
        m.stage_group = m.stage_group.or(r.stage_group);
        m.tumor_size_cm = m.tumor_size_cm.or(r.tumor_size_cm);
        m.grade = m.grade.or(r.grade);
        m.ecog = m.ecog.or(r.ecog);
        m.karnofsky = m.karnofsky.or(r.karnofsky);
        for (dst, src) in [(&mut m.er, r.er), (&mut m.pr, r.pr), (&mut m.her2, r.her2)] {
            if *dst == Biomarker::Unknown {
                *dst = src;
            }
        }
    }
    m
}

fn emr_value<T: Copy>(
    patient_id: &str,
    field: &str,
    raw: &Option<String>,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Option<T>, CohortError> {
    match raw.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => parse(s).map(Some).ok_or_else(|| CohortError::InvalidValue {
            patient_id: patient_id.into(),
            field: field.into(),
            value: s.into(),
        }),
    }
}

fn parse_biomarker(s: &str) -> Option<Biomarker> {
    Biomarker::parse(&s.to_ascii_lowercase())
}

/// Structured EMR values override extracted ones; disagreements are
/// recorded.
fn resolve<T: PartialEq + std::fmt::Debug + Copy>(
    patient_id: &str,
    field: &str,
    emr: Option<T>,
    extracted: Option<T>,
    conflicts: &mut Vec<Conflict>,
) -> Option<T> {
    if let (Some(e), Some(x)) = (emr, extracted) {
        if e != x {
            log::warn!("patient {patient_id}: {field} differs (EMR {e:?}, notes {x:?}); keeping EMR");
            conflicts.push(Conflict {
                patient_id: patient_id.into(),
                field: field.into(),
                emr: format!("{e:?}"),
                extracted: format!("{x:?}"),
            });
        }
    }
    emr.or(extracted)
}

fn resolve_phenotype(emr: &EmrRow, extracted: &PhenotypeRecord, conflicts: &mut Vec<Conflict>) -> Result<PhenotypeRecord, CohortError> {
    let id = emr.patient_id.as_str();
    let known = |b: Biomarker| (b != Biomarker::Unknown).then_some(b);
    let bio = |field: &str, raw: &Option<String>, x: Biomarker, conflicts: &mut Vec<Conflict>| -> Result<Biomarker, CohortError> {
        let e = emr_value(id, field, raw, parse_biomarker)?.and_then(known);
        Ok(resolve(id, field, e, known(x), conflicts).unwrap_or(Biomarker::Unknown))
    };
    Ok(PhenotypeRecord {
        t_stage: resolve(id, "t_stage", emr_value(id, "t_stage", &emr.t_stage, TStage::parse)?, extracted.t_stage, conflicts),
        n_stage: resolve(id, "n_stage", emr_value(id, "n_stage", &emr.n_stage, NStage::parse)?, extracted.n_stage, conflicts),
        m_stage: resolve(id, "m_stage", emr_value(id, "m_stage", &emr.m_stage, MStage::parse)?, extracted.m_stage, conflicts),
        stage_group: resolve(
            id,
            "stage_group",
            emr_value(id, "stage_group", &emr.stage_group, StageGroup::parse)?,
            extracted.stage_group,
            conflicts,
        ),
        tumor_size_cm: extracted.tumor_size_cm,
        grade: resolve(id, "grade", emr_value(id, "grade", &emr.grade, Grade::parse)?, extracted.grade, conflicts),
        ecog: resolve(id, "ecog", emr.ecog, extracted.ecog, conflicts),
        karnofsky: resolve(id, "karnofsky", emr.karnofsky, extracted.karnofsky, conflicts),
        er: bio("er", &emr.er, extracted.er, conflicts)?,
        pr: bio("pr", &emr.pr, extracted.pr, conflicts)?,
        her2: bio("her2", &emr.her2, extracted.her2, conflicts)?,
    })
}

fn milligrams(amount: f64, unit: &str) -> Option<f64> {
    match unit.trim().to_ascii_lowercase().as_str() {
        "mg" => Some(amount),
        "g" => Some(amount * 1000.0),
        "mcg" | "ug" | "µg" => Some(amount / 1000.0),
        _ => None,
    }
}

/// Sum over drugs of total dose / weeks, in mg. Drugs in other units are
/// left out; `None` when nothing is left. Returns the excluded count too.
pub fn dose_per_week(plan: &TreatmentPlan) -> (Option<f64>, usize) {
    let mut total = None;
    let mut excluded = 0;
    for d in &plan.drugs {
        match milligrams(d.total_dose, &d.dose_unit) {
            Some(mg) => *total.get_or_insert(0.0) += mg / d.weeks as f64,
            None => {
                log::warn!("patient {}: dose unit {:?} for {} not convertible to mg; excluded", plan.patient_id, d.dose_unit, d.name);
                excluded += 1;
            }
        }
    }
    (total, excluded)
}

fn columns(table: &ElixhauserTable, catalog: &RegimenCatalog) -> Vec<ColumnInfo> {
    use ColumnKind::*;
    let mut c = vec![
        ColumnInfo::new("age", Continuous).unit("years"),
        ColumnInfo::new("gender", Categorical).codes(encode::mapping(encode::GENDER)),
        ColumnInfo::new("bsa", Continuous).unit("m2").missing(),
        ColumnInfo::new("srcr", Continuous).unit("mg/dL").missing(),
        ColumnInfo::new("readmission_score", Continuous).missing(),
    ];
    c.extend(table.groups().map(|g| ColumnInfo::new(format!("elix:{g}"), Binary)));
    for b in ["er", "pr", "her2"] {
        c.push(ColumnInfo::new(b, Categorical).missing().codes(encode::mapping(encode::BIOMARKER)));
    }
    c.push(ColumnInfo::new("ecog", Ordinal).missing());
    c.push(ColumnInfo::new("karnofsky", Ordinal).missing());
    let staged = |name: &str, codes| {
        let mut col = ColumnInfo::new(name, Ordinal).missing().codes(codes);
        col.codes.push(("missing".into(), MISSING));
        col
    };
    c.push(staged("t_stage", encode::mapping(encode::T_STAGE)));
    c.push(staged("n_stage", encode::mapping(encode::N_STAGE)));
    c.push(staged("m_stage", encode::mapping(encode::M_STAGE)));
    c.push(staged("stage_group", encode::mapping(encode::STAGE_GROUP)));
    c.push(staged("grade", encode::mapping(encode::GRADE)));
    c.push(ColumnInfo::new("tumor_size_cm", Continuous).unit("cm").missing());
    c.push(ColumnInfo::new("dose_per_week", Continuous).unit("mg/week").missing());
    c.push(ColumnInfo::new("weeks", Continuous).unit("weeks"));
    c.extend(catalog.combinations.iter().map(|k| ColumnInfo::new(format!("regimen:{}", k.key()), Binary)));
    c.extend(catalog.drugs.iter().map(|d| ColumnInfo::new(format!("drug:{d}"), Binary)));
    c.push(ColumnInfo::new("drug_other", Binary));
    c
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn row(f: &FeatureVector, catalog: &RegimenCatalog) -> Vec<f64> {
    let p = &f.phenotype;
    let mut r = vec![
        f.age,
        encode(encode::GENDER, Some(f.gender)),
        encode::encode_number(f.bsa),
        encode::encode_number(f.srcr),
        encode::encode_number(f.readmission_score),
    ];
    r.extend(f.comorbidities.iter().map(|&b| flag(b)));
    r.extend([p.er, p.pr, p.her2].map(encode::encode_biomarker));
    r.push(encode::encode_number(p.ecog.map(f64::from)));
    r.push(encode::encode_number(p.karnofsky.map(f64::from)));
    r.push(encode(encode::T_STAGE, p.t_stage));
    r.push(encode(encode::N_STAGE, p.n_stage));
    r.push(encode(encode::M_STAGE, p.m_stage));
    r.push(encode(encode::STAGE_GROUP, p.stage_group));
    r.push(encode(encode::GRADE, p.grade));
    r.push(encode::encode_number(p.tumor_size_cm));
    r.push(encode::encode_number(f.dose_per_week));
    r.push(f.weeks as f64);
    r.extend(catalog.combinations.iter().map(|k| flag(f.regimen.combination.as_deref() == Some(k.key().as_str()))));
    r.extend(catalog.drugs.iter().map(|d| flag(f.regimen.drugs.contains(d))));
    r.push(flag(f.regimen.other));
    r
}

/// Patients must appear in the EMR, have a plan and at least one
/// extraction line. The first plan (earliest start) is used; failure and
/// censoring are measured from its start, censoring at the last note date.
pub fn build_cohort(
    emr: &[EmrRow],
    plans: &[TreatmentPlan],
    approved: &[ApprovedDrug],
    extractions: &[ExtractionLine],
    cfg: &CohortConfig,
) -> Result<Cohort, CohortError> {
    let first = first_plans(plans);
    let mut notes: BTreeMap<&str, Vec<&ExtractionLine>> = BTreeMap::new();
    for l in extractions {
        notes.entry(l.patient_id.as_str()).or_default().push(l);
    }
    let emr_ids: BTreeSet<&str> = emr.iter().map(|r| r.patient_id.as_str()).collect();
    let plan_ids: BTreeSet<&str> = first.keys().map(String::as_str).collect();
    let note_ids: BTreeSet<&str> = notes.keys().copied().collect();
    let all: BTreeSet<&str> = emr_ids.iter().chain(&plan_ids).chain(&note_ids).copied().collect();
    let keep: BTreeSet<&str> = all.iter().copied().filter(|id| emr_ids.contains(id) && plan_ids.contains(id) && note_ids.contains(id)).collect();
    let orphans: Vec<String> = all.difference(&keep).map(|s| s.to_string()).collect();
    if keep.is_empty() {
        return Err(CohortError::EmptyIntersection);
    }
    if !orphans.is_empty() {
        if cfg.strict_alignment {
            return Err(CohortError::Alignment { orphans });
        }
        log::warn!("{} patient(s) missing from at least one source were dropped", orphans.len());
    }

    let cohort_plans: Vec<&TreatmentPlan> = keep.iter().map(|id| first[*id]).collect();
    let (catalog, regimens) = build_regimen_features(&cohort_plans, approved, cfg.support_threshold);
    let table = ElixhauserTable::builtin();
    let emr_by_id: BTreeMap<&str, &EmrRow> = emr.iter().map(|r| (r.patient_id.as_str(), r)).collect();

    let mut features = Vec::with_capacity(keep.len());
    let mut survival = Vec::with_capacity(keep.len());
    let mut conflicts = Vec::new();
    let mut excluded_doses = 0;
    for id in &keep {
        let e = emr_by_id[id];
        let plan = first[*id];
        let mut lines = notes[id].clone();
        lines.sort_by(|a, b| (a.note_date, &a.note_id).cmp(&(b.note_date, &b.note_id)));
        let extracted = merge_phenotypes(lines.iter().filter_map(|l| match &l.record {
            Record::Phenotype(p) => Some(p),
            _ => None,
        }));
        let outcomes: Vec<(NaiveDate, OutcomeRecord)> = lines
            .iter()
            .filter_map(|l| match &l.record {
                Record::Outcome(o) => Some((l.note_date, o.clone())),
                _ => None,
            })
            .collect();
        let label = derive_failure(&outcomes, plan.plan_start);
        let last = lines.iter().map(|l| l.note_date).max().expect("patient has notes");
        let (time_days, event) = time_to_event(id, plan.plan_start, label.event_date, last)?;
        survival.push(PatientSurvival {
            patient_id: id.to_string(),
            time_days,
            event,
            event_date: label.event_date,
            causes: label.causes,
        });
        let (dose, excluded) = dose_per_week(plan);
        excluded_doses += excluded;
        features.push(FeatureVector {
            patient_id: id.to_string(),
            age: e.age,
            gender: Gender::parse(&e.gender),
            bsa: e.bsa,
            srcr: e.srcr,
            readmission_score: e.readmission_score,
            comorbidities: table.flags(&e.icd10()),
            phenotype: resolve_phenotype(e, &extracted, &mut conflicts)?,
            dose_per_week: dose,
            weeks: plan.drugs.iter().map(|d| d.weeks).max().unwrap_or(0),
            regimen: regimens[*id].clone(),
        });
    }

    let rows: Vec<Vec<f64>> = features.iter().map(|f| row(f, &catalog)).collect();
    let summary = summarize(&features, &survival, &catalog, orphans, conflicts.len(), excluded_doses);
    Ok(Cohort { columns: columns(table, &catalog), features, rows, survival, catalog, conflicts, summary })
}

fn summarize(
    features: &[FeatureVector],
    survival: &[PatientSurvival],
    catalog: &RegimenCatalog,
    orphans: Vec<String>,
    conflicts: usize,
    excluded_doses: usize,
) -> CohortSummary {
    let events = survival.iter().filter(|s| s.event).count();
    let regimens = catalog
        .combinations
        .iter()
        .map(|c| {
            let key = c.key();
            let (patients, failures) = features
                .iter()
                .zip(survival)
                .filter(|(f, _)| f.regimen.combination.as_deref() == Some(key.as_str()))
                .fold((0, 0), |(n, k), (_, s)| (n + 1, k + s.event as usize));
            RegimenFailure { regimen: key, patients, failures, failure_pct: 100.0 * failures as f64 / patients.max(1) as f64 }
        })
        .collect();
    CohortSummary {
        n: survival.len(),
        events,
        failure_prevalence: (!survival.is_empty()).then(|| events as f64 / survival.len() as f64),
        support_threshold: catalog.support_threshold,
        observed_combinations: catalog.observed_combinations,
        retained_combinations: catalog.combinations.len(),
        regimens,
        orphans,
        conflicts,
        excluded_doses,
    }
}

impl Cohort {
    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn dataset(&self) -> Result<SurvivalData, CohortError> {
        let x = FeatureMatrix::from_rows(self.feature_names(), &self.rows)?;
        let y = self.survival.iter().map(|s| SurvivalRecord::new(s.time_days as f64, s.event)).collect();
        Ok(SurvivalData::new(x, y)?)
    }

    /// `patient_id` then one column per feature, values as shortest
    /// round-trip decimals.
    pub fn write_features_csv<W: Write>(&self, w: W) -> Result<(), CohortError> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |source| CohortError::Csv { source_name: "features".into(), source };
        let mut header = vec!["patient_id".to_string()];
        header.extend(self.feature_names());
        out.write_record(&header).map_err(csv_err)?;
        for (f, r) in self.features.iter().zip(&self.rows) {
            let mut rec = vec![f.patient_id.clone()];
            rec.extend(r.iter().map(|v| v.to_string()));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_survival_jsonl<W: Write>(&self, mut w: W) -> Result<(), CohortError> {
        for s in &self.survival {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Joins a features CSV with survival JSONL on patient id, in CSV row
/// order.
pub fn load_dataset<R1: Read, R2: BufRead>(features: R1, survival: R2) -> Result<(Vec<String>, SurvivalData), CohortError> {
    let mut labels: BTreeMap<String, PatientSurvival> = BTreeMap::new();
    for (i, line) in survival.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: PatientSurvival = serde_json::from_str(&line).map_err(|e| CohortError::InvalidRow {
            source_name: "survival".into(),
            line: i as u64 + 1,
            reason: e.to_string(),
        })?;
        if s.time_days == 0 {
            return Err(CohortError::InvalidRow { source_name: "survival".into(), line: i as u64 + 1, reason: "time_days must be >= 1".into() });
        }
        labels.insert(s.patient_id.clone(), s);
    }
    let mut rdr = csv::Reader::from_reader(features);
    let csv_err = |source| CohortError::Csv { source_name: "features".into(), source };
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("patient_id") {
        return Err(CohortError::InvalidRow { source_name: "features".into(), line: 1, reason: "first column must be patient_id".into() });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut orphans = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(0).unwrap_or("").to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CohortError::InvalidRow { source_name: "features".into(), line, reason: e.to_string() })?;
        match labels.remove(&id) {
            Some(s) => {
                y.push(SurvivalRecord::new(s.time_days as f64, s.event));
                rows.push(values);
                ids.push(id);
            }
            None => orphans.push(id),
        }
    }
    orphans.extend(labels.into_keys());
    if !orphans.is_empty() {
        orphans.sort();
        return Err(CohortError::Alignment { orphans });
    }
    let x = FeatureMatrix::from_rows(names, &rows)?;
    Ok((ids, SurvivalData::new(x, y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::emr::PlanDrug;
    use crate::extraction::critic::CriticVerdict;
    use crate::extraction::schema::Target;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn plan(pid: &str, drugs: &[(&str, f64, &str, u32)]) -> TreatmentPlan {
        TreatmentPlan {
            patient_id: pid.into(),
            plan_id: "a".into(),
            plan_start: d("2020-01-01"),
            plan_end: None,
            drugs: drugs
                .iter()
                .map(|&(g, dose, unit, weeks)| PlanDrug { gpi8: g.into(), name: g.into(), total_dose: dose, dose_unit: unit.into(), weeks })
                .collect(),
        }
    }

    fn emr(pid: &str) -> EmrRow {
        EmrRow {
            patient_id: pid.into(),
            age: 60.0,
            gender: "F".into(),
            bsa: None,
            srcr: None,
            readmission_score: None,
            icd10_codes: None,
            t_stage: None,
            n_stage: None,
            m_stage: None,
            stage_group: None,
            grade: None,
            er: None,
            pr: None,
            her2: None,
            ecog: None,
            karnofsky: None,
        }
    }

    fn line(pid: &str, note: &str, date: &str, record: Record) -> ExtractionLine {
        ExtractionLine {
            patient_id: pid.into(),
            note_id: note.into(),
            note_date: d(date),
            target: record.target(),
            record,
            verdict: CriticVerdict { valid_json: true, schema_ok: true, grounded: true, violations: vec![], attempt: 1 },
            attempts: 1,
            forced_fields: vec![],
            dropped_chunk_ids: vec![],
        }
    }

    #[test]
    fn dose_arithmetic() {
        assert_eq!(dose_per_week(&plan("p", &[("21100010", 600.0, "mg", 6)])), (Some(100.0), 0));
        assert_eq!(dose_per_week(&plan("p", &[("a", 1.2, "g", 4), ("b", 600.0, "mg", 6)])), (Some(400.0), 0));
        assert_eq!(dose_per_week(&plan("p", &[("a", 5.0, "AUC", 4)])), (None, 1));
    }

    #[test]
    fn merge_takes_first_non_null() {
        let a = PhenotypeRecord { t_stage: Some(TStage::T2), er: Biomarker::Unknown, ..Default::default() };
        let b = PhenotypeRecord { t_stage: Some(TStage::T3), grade: Some(Grade::G2), er: Biomarker::Positive, ..Default::default() };
        let m = merge_phenotypes([&a, &b]);
        assert_eq!((m.t_stage, m.grade, m.er), (Some(TStage::T2), Some(Grade::G2), Biomarker::Positive));
    }

    #[test]
    fn emr_wins_conflicts() {
        let mut e = emr("p");
        e.er = Some("Negative".into());
        e.t_stage = Some("T1".into());
        let x = PhenotypeRecord { er: Biomarker::Positive, t_stage: Some(TStage::T1), grade: Some(Grade::G3), ..Default::default() };
        let mut c = Vec::new();
        let r = resolve_phenotype(&e, &x, &mut c).unwrap();
        assert_eq!((r.er, r.t_stage, r.grade), (Biomarker::Negative, Some(TStage::T1), Some(Grade::G3)));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].field, "er");
        e.t_stage = Some("T9".into());
        assert!(matches!(resolve_phenotype(&e, &x, &mut c), Err(CohortError::InvalidValue { .. })));
    }

    #[test]
    fn alignment_and_labels() {
        let approved = vec![ApprovedDrug { gpi8: "21100010".into(), name: "docetaxel".into() }];
        let plans = vec![plan("a", &[("21100010", 600.0, "mg", 6)]), plan("b", &[("21100010", 100.0, "mg", 1)]), plan("c", &[])];
        let mut died = OutcomeRecord::default();
        died.death_hospice.died = true;
        let ex = vec![
            line("a", "n1", "2020-04-10", Record::Outcome(OutcomeRecord::default())),
            line("a", "n0", "2020-02-01", Record::Phenotype(PhenotypeRecord { er: Biomarker::Positive, ..Default::default() })),
            line("b", "n2", "2020-03-01", Record::Outcome(died)),
            line("d", "n3", "2020-03-01", Record::empty(Target::Outcome)),
        ];
        let rows = vec![emr("a"), emr("b"), emr("c")];
        let cohort = build_cohort(&rows, &plans, &approved, &ex, &CohortConfig { support_threshold: 1, strict_alignment: false }).unwrap();
        assert_eq!(cohort.summary.orphans, vec!["c", "d"]);
        assert_eq!(cohort.survival[0], PatientSurvival { patient_id: "a".into(), time_days: 100, event: false, event_date: None, causes: vec![] });
        assert_eq!((cohort.survival[1].time_days, cohort.survival[1].event), (60, true));
        assert_eq!(cohort.summary.failure_prevalence, Some(0.5));
        assert_eq!(cohort.summary.regimens[0].failure_pct, 50.0);
        let names = cohort.feature_names();
        let er = names.iter().position(|n| n == "er").unwrap();
        assert_eq!(cohort.rows[0][er], 1.0);
        assert_eq!(cohort.rows[1][er], MISSING);
        assert!(matches!(
            build_cohort(&rows, &plans, &approved, &ex, &CohortConfig { support_threshold: 1, strict_alignment: true }),
            Err(CohortError::Alignment { .. })
        ));
        assert!(matches!(build_cohort(&[emr("z")], &plans, &approved, &ex, &CohortConfig::default()), Err(CohortError::EmptyIntersection)));
    }

    #[test]
    fn csv_round_trip_through_loader() {
        let approved = vec![ApprovedDrug { gpi8: "21100010".into(), name: "docetaxel".into() }];
        let plans = vec![plan("a", &[("21100010", 600.0, "mg", 6)]), plan("b", &[("21100010", 100.0, "mg", 1)])];
        let ex = vec![
            line("a", "n1", "2020-04-10", Record::Outcome(OutcomeRecord::default())),
            line("b", "n2", "2020-03-01", Record::Outcome(OutcomeRecord::default())),
        ];
        let mut e = emr("b");
        e.bsa = Some(1.83);
        let cohort = build_cohort(&[emr("a"), e], &plans, &approved, &ex, &CohortConfig::default()).unwrap();
        let mut f = Vec::new();
        let mut s = Vec::new();
        cohort.write_features_csv(&mut f).unwrap();
        cohort.write_survival_jsonl(&mut s).unwrap();
        let (ids, data) = load_dataset(f.as_slice(), s.as_slice()).unwrap();
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(data, cohort.dataset().unwrap());
        let truncated = &s[..s.iter().position(|&b| b == b'\n').unwrap() + 1];
        assert!(matches!(load_dataset(f.as_slice(), truncated), Err(CohortError::Alignment { orphans }) if orphans == ["b"]));
    }
}

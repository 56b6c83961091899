//! CSV readers for structured EMR rows, treatment plans and the approved
//! drug list.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::CohortError;

/// One structured EMR row. Staging, biomarker and performance columns are
/// optional; when present they take precedence over extracted values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmrRow {
    pub patient_id: String,
    pub age: f64,
    pub gender: String,
    #[serde(default)]
    pub bsa: Option<f64>,
    #[serde(default)]
    pub srcr: Option<f64>,
    #[serde(default)]
    pub readmission_score: Option<f64>,
    /// ';'-separated ICD-10 codes.
    #[serde(default)]
    pub icd10_codes: Option<String>,
    #[serde(default)]
    pub t_stage: Option<String>,
    #[serde(default)]
    pub n_stage: Option<String>,
    #[serde(default)]
    pub m_stage: Option<String>,
    #[serde(default)]
    pub stage_group: Option<String>,
    #[serde(default)]
    pub grade: Option<String>,
    #[serde(default)]
    pub er: Option<String>,
    #[serde(default)]
    pub pr: Option<String>,
    #[serde(default)]
    pub her2: Option<String>,
    #[serde(default)]
    pub ecog: Option<u8>,
    #[serde(default)]
    pub karnofsky: Option<u8>,
}

impl EmrRow {
    pub fn icd10(&self) -> Vec<String> {
        self.icd10_codes
            .as_deref()
            .unwrap_or("")
            .split(';')
            .map(|c| c.trim().replace('.', "").to_ascii_uppercase())
            .filter(|c| !c.is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDrug {
    pub gpi8: String,
    pub name: String,
    pub total_dose: f64,
    pub dose_unit: String,
    pub weeks: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentPlan {
    pub patient_id: String,
    pub plan_id: String,
    pub plan_start: NaiveDate,
    pub plan_end: Option<NaiveDate>,
    pub drugs: Vec<PlanDrug>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovedDrug {
    pub gpi8: String,
    pub name: String,
}

fn csv_err(name: &str) -> impl Fn(csv::Error) -> CohortError + '_ {
    move |source| CohortError::Csv { source_name: name.to_string(), source }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn rows<T: for<'de> Deserialize<'de>, R: Read>(reader: R, name: &str) -> Result<Vec<(u64, T)>, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err(name))?.clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(name))?;
        let line = line_of(&rec);
        let row = rec.deserialize(Some(&headers)).map_err(|e| CohortError::InvalidRow {
            source_name: name.to_string(),
            line,
            reason: e.to_string(),
        })?;
        out.push((line, row));
    }
    Ok(out)
}

pub fn read_emr<R: Read>(reader: R) -> Result<Vec<EmrRow>, CohortError> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (line, row) in rows::<EmrRow, _>(reader, "emr")? {
        let bad = |reason: String| CohortError::InvalidRow { source_name: "emr".into(), line, reason };
        if row.patient_id.is_empty() {
            return Err(bad("empty patient_id".into()));
        }
        if let Some(prev) = seen.insert(row.patient_id.clone(), line) {
            return Err(bad(format!("patient {} already listed on line {prev}", row.patient_id)));
        }
        if !(row.age >= 0.0) {
            return Err(bad(format!("invalid age {}", row.age)));
        }
        out.push(row);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct PlanRow {
    patient_id: String,
    plan_id: String,
    plan_start: NaiveDate,
    #[serde(default)]
    plan_end: Option<NaiveDate>,
    gpi8: String,
    drug_name: String,
    total_dose: f64,
    dose_unit: String,
    weeks: u32,
}

/// Long format: one row per (plan, drug). Rows of a plan must agree on
/// its dates.
pub fn read_plans<R: Read>(reader: R) -> Result<Vec<TreatmentPlan>, CohortError> {
    let mut plans: BTreeMap<(String, String), TreatmentPlan> = BTreeMap::new();
    for (line, r) in rows::<PlanRow, _>(reader, "plans")? {
        let bad = |reason: String| CohortError::InvalidRow { source_name: "plans".into(), line, reason };
        if r.gpi8.chars().count() != 8 {
            return Err(bad(format!("gpi8 {:?} is not 8 characters", r.gpi8)));
        }
        if r.weeks == 0 {
            return Err(bad("weeks must be positive".into()));
        }
        if !(r.total_dose >= 0.0) {
            return Err(bad(format!("invalid total_dose {}", r.total_dose)));
        }
        if r.plan_end.is_some_and(|e| e < r.plan_start) {
            return Err(bad("plan_end before plan_start".into()));
        }
        let plan = plans.entry((r.patient_id.clone(), r.plan_id.clone())).or_insert_with(|| TreatmentPlan {
            patient_id: r.patient_id.clone(),
            plan_id: r.plan_id.clone(),
            plan_start: r.plan_start,
            plan_end: r.plan_end,
            drugs: Vec::new(),
        });
        if plan.plan_start != r.plan_start || plan.plan_end != r.plan_end {
            return Err(bad(format!("plan {} has inconsistent dates", r.plan_id)));
        }
        plan.drugs.push(PlanDrug {
            gpi8: r.gpi8,
            name: r.drug_name,
            total_dose: r.total_dose,
            dose_unit: r.dose_unit,
            weeks: r.weeks,
        });
    }
    Ok(plans.into_values().collect())
}

pub fn read_approved_drugs<R: Read>(reader: R) -> Result<Vec<ApprovedDrug>, CohortError> {
    let mut out = Vec::new();
    for (line, d) in rows::<ApprovedDrug, _>(reader, "drugs")? {
        if d.gpi8.is_empty() || d.gpi8.chars().count() > 8 || d.name.is_empty() {
            return Err(CohortError::InvalidRow {
                source_name: "drugs".into(),
                line,
                reason: format!("bad entry {:?}/{:?}", d.gpi8, d.name),
            });
        }
        out.push(d);
    }
    Ok(out)
}

/// The earliest plan of each patient (ties broken by plan id).
pub fn first_plans(plans: &[TreatmentPlan]) -> BTreeMap<String, &TreatmentPlan> {
    let mut out: BTreeMap<String, &TreatmentPlan> = BTreeMap::new();
    for p in plans {
        match out.get(&p.patient_id) {
            Some(cur) if (cur.plan_start, &cur.plan_id) <= (p.plan_start, &p.plan_id) => {}
            _ => {
                out.insert(p.patient_id.clone(), p);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLANS: &str = "\
patient_id,plan_id,plan_start,plan_end,gpi8,drug_name,total_dose,dose_unit,weeks
p1,a,2020-03-01,,21100010,docetaxel,600,mg,6
p1,a,2020-03-01,,21531080,trastuzumab,1,g,6
p1,b,2019-01-01,2019-06-01,21100010,docetaxel,300,mg,3
p2,c,2020-05-01,,21100010,docetaxel,100,mg,1
";

    #[test]
    fn plans_grouped_and_first_selected() {
        let plans = read_plans(PLANS.as_bytes()).unwrap();
        assert_eq!(plans.len(), 3);
        let first = first_plans(&plans);
        assert_eq!(first["p1"].plan_id, "b");
        assert_eq!(first["p2"].drugs.len(), 1);
        let a = plans.iter().find(|p| p.plan_id == "a").unwrap();
        assert_eq!(a.drugs.len(), 2);
        assert_eq!(a.plan_end, None);
    }

    #[test]
    fn plan_validation() {
        let bad_gpi = "patient_id,plan_id,plan_start,plan_end,gpi8,drug_name,total_dose,dose_unit,weeks\np,a,2020-01-01,,2110,x,1,mg,1\n";
        assert!(matches!(read_plans(bad_gpi.as_bytes()), Err(CohortError::InvalidRow { line: 2, .. })));
        let backwards =
            "patient_id,plan_id,plan_start,plan_end,gpi8,drug_name,total_dose,dose_unit,weeks\np,a,2020-01-01,2019-01-01,21100010,x,1,mg,1\n";
        assert!(read_plans(backwards.as_bytes()).is_err());
        let zero_weeks = "patient_id,plan_id,plan_start,plan_end,gpi8,drug_name,total_dose,dose_unit,weeks\np,a,2020-01-01,,21100010,x,1,mg,0\n";
        assert!(read_plans(zero_weeks.as_bytes()).is_err());
    }

    #[test]
    fn emr_optional_columns() {
        let csv = "patient_id,age,gender,bsa,srcr,readmission_score,icd10_codes\np1,61,F,1.8,,0.2,I10;e11.9\n";
        let rows = read_emr(csv.as_bytes()).unwrap();
        assert_eq!(rows[0].srcr, None);
        assert_eq!(rows[0].er, None);
        assert_eq!(rows[0].icd10(), vec!["I10", "E119"]);
        let dup = "patient_id,age,gender\np1,61,F\np1,62,F\n";
        assert!(read_emr(dup.as_bytes()).is_err());
    }
}

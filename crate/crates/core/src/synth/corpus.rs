//! Synthetic oncology corpus: notes, EMR rows, treatment plans, an
//! approved drug list, gold extraction labels and the generating survival
//! truth.
//!
//! Each patient has an admission note stating phenotype fields, follow-up
//! notes with non-failure findings, and, for patients who fail, a final
//! note stating the failure. Hazard rises with stage, ECOG, grade and
//! regimen, so a fitted model has signal to find.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{ApprovedDrug, EmrRow, FailureCause, PlanDrug, TreatmentPlan};
use crate::corpus::{ClinicalNote, NoteType};
use crate::extraction::evaluate::LabeledRecord;
use crate::extraction::schema::{Biomarker, Grade, MStage, NStage, OutcomeRecord, PhenotypeRecord, Record, StageGroup, TStage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// Weibull shape of the failure times.
    pub shape: f64,
    pub scale_days: f64,
    /// Censoring times are uniform on this range.
    pub censor_min_days: u32,
    pub censor_max_days: u32,
    /// Probability that the EMR row carries the structured staging and
    /// biomarker fields.
    pub structured_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 200,
            shape: 1.3,
            scale_days: 2200.0,
            censor_min_days: 90,
            censor_max_days: 1400,
            structured_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTruth {
    pub patient_id: String,
    pub plan_start: NaiveDate,
    pub time_days: u32,
    pub event: bool,
    pub cause: Option<FailureCause>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub notes: Vec<ClinicalNote>,
    pub emr: Vec<EmrRow>,
    pub plans: Vec<TreatmentPlan>,
    pub approved: Vec<ApprovedDrug>,
    pub gold: Vec<LabeledRecord>,
    pub truth: Vec<PatientTruth>,
}

pub const APPROVED_DRUGS: &[(&str, &str)] = &[
    ("21100020", "carboplatin"),
    ("21101010", "cyclophosphamide"),
    ("21200030", "doxorubicin"),
    ("21300010", "capecitabine"),
    ("21402010", "anastrozole"),
    ("21402040", "letrozole"),
    ("21403030", "tamoxifen"),
    ("21403510", "fulvestrant"),
    ("21500030", "docetaxel"),
    ("21500050", "paclitaxel"),
    ("21531070", "pertuzumab"),
    ("21531080", "trastuzumab"),
    ("21532560", "palbociclib"),
    ("30042030", "denosumab"),
];

const UNAPPROVED: (&str, &str) = ("99000001", "investigational agent");

/// (drugs, weight, log-hazard effect, total mg per week per drug)
const REGIMENS: &[(&[&str], f64, f64, &[f64])] = &[
    (&["cyclophosphamide", "docetaxel"], 0.16, 0.0, &[600.0, 75.0]),
    (&["cyclophosphamide", "doxorubicin"], 0.14, 0.1, &[600.0, 60.0]),
    (&["carboplatin", "docetaxel", "trastuzumab"], 0.12, -0.4, &[450.0, 75.0, 150.0]),
    (&["docetaxel", "pertuzumab", "trastuzumab"], 0.10, -0.5, &[75.0, 140.0, 150.0]),
    (&["letrozole", "palbociclib"], 0.12, -0.2, &[17.5, 700.0]),
    (&["anastrozole"], 0.09, -0.3, &[7.0]),
    (&["tamoxifen"], 0.08, -0.1, &[140.0]),
    (&["capecitabine"], 0.07, 0.4, &[14000.0]),
    (&["denosumab", "fulvestrant"], 0.07, 0.7, &[30.0, 125.0]),
    (&["paclitaxel"], 0.03, 0.2, &[80.0]),
    (&["carboplatin", "paclitaxel"], 0.015, 0.3, &[300.0, 80.0]),
    (&["capecitabine", "docetaxel"], 0.005, 0.4, &[14000.0, 75.0]),
];

const COMORBIDITIES: &[(&str, f64)] = &[
    ("I10", 0.35),
    ("E11.9", 0.15),
    ("E66.9", 0.2),
    ("J44.9", 0.07),
    ("F32.9", 0.12),
    ("N18.3", 0.05),
    ("I48.91", 0.05),
    ("D64.9", 0.1),
    ("E03.9", 0.08),
];

fn gpi(name: &str) -> &'static str {
    APPROVED_DRUGS.iter().find(|(_, n)| *n == name).map(|(g, _)| *g).expect("regimen drug is approved")
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    // Box-Muller
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    mean + sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn round_to(x: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (x * f).round() / f
}

fn add_days(d: NaiveDate, n: u32) -> NaiveDate {
    d.checked_add_days(Days::new(n as u64)).expect("date in range")
}

fn sub_days(d: NaiveDate, n: u32) -> NaiveDate {
    d.checked_sub_days(Days::new(n as u64)).expect("date in range")
}

fn stage_tnm(rng: &mut ChaCha8Rng, sg: StageGroup) -> (TStage, NStage, MStage) {
    use NStage::*;
    use TStage::*;
    let (t, n) = match sg {
        StageGroup::IA | StageGroup::I => (T1, N0),
        StageGroup::IIA => *pick(rng, &[(T2, N0), (T1, N1)]),
        StageGroup::IIB => *pick(rng, &[(T2, N1), (T3, N0)]),
        StageGroup::IIIA => *pick(rng, &[(T3, N1), (T2, N2), (T1, N2)]),
        StageGroup::IIIB => *pick(rng, &[(T4, N0), (T4, N1), (T4, N2)]),
        StageGroup::IIIC => (*pick(rng, &[T1, T2, T3, T4]), N3),
        _ => (*pick(rng, &[T1, T2, T3, T4]), *pick(rng, &[N0, N1, N2, N3])),
    };
    (t, n, if sg == StageGroup::IV { MStage::M1 } else { MStage::M0 })
}

fn receptor_word(b: Biomarker, rng: &mut ChaCha8Rng) -> &'static str {
    match (b, rng.random_range(0..3)) {
        (Biomarker::Positive, 0) => "positive",
        (Biomarker::Positive, 1) => "pos",
        (Biomarker::Positive, _) => "+",
        (_, 0) => "negative",
        (_, 1) => "neg",
        _ => "-",
    }
}

fn roman_to_arabic(sg: StageGroup) -> String {
    let s = sg.as_str();
    let (num, letter) = s.split_at(s.trim_end_matches(['A', 'B', 'C']).len());
    let n = match num {
        "I" => "1",
        "II" => "2",
        "III" => "3",
        "IV" => "4",
        other => other,
    };
    format!("{n}{}", letter.to_ascii_lowercase())
}

const HPI: &[&str] = &[
    "Patient presents to establish care with medical oncology after recent biopsy.",
    "She reports a palpable lump noticed on self examination several weeks ago.",
    "Referred by her primary care physician following abnormal screening mammogram.",
    "Past medical history reviewed and updated in the chart.",
    "Family history is notable for a maternal aunt with breast cancer.",
    "Allergies reviewed, no known drug allergies.",
];

const PLAN_LINES: &[&str] = &[
    "Treatment options discussed at length and consent obtained.",
    "Will start systemic therapy per the regimen below.",
    "Port placement scheduled before cycle one.",
    "Follow up in clinic in three weeks with labs.",
];

const STABLE: &[&str] = &[
    "Restaging imaging shows stable disease.",
    "There is no evidence of progression on the latest scan.",
    "Tolerating therapy well overall.",
    "Labs reviewed and within acceptable limits for treatment.",
    "Continue current regimen and return in six weeks.",
];

/// Admission note text and the phenotype record it states.
fn admission(rng: &mut ChaCha8Rng, p: &PhenotypeRecord, drugs: &[&str]) -> (String, PhenotypeRecord) {
    let mut gold = PhenotypeRecord::default();
    let mut lines = vec![pick(rng, HPI).to_string(), pick(rng, HPI).to_string()];
    let present = |rng: &mut ChaCha8Rng| rng.random::<f64>() < 0.85;

    if let (Some(t), Some(n), Some(m)) = (p.t_stage, p.n_stage, p.m_stage) {
        if present(rng) {
            let s = if rng.random::<bool>() { format!("TNM: {t} {n} {m}.") } else { format!("Pathologic stage p{t}{n}{m}.") };
            lines.push(s);
            (gold.t_stage, gold.n_stage, gold.m_stage) = (Some(t), Some(n), Some(m));
        }
    }
    if let Some(sg) = p.stage_group {
        if present(rng) {
            let s = if rng.random::<bool>() {
                format!("Clinical stage {sg} invasive ductal carcinoma of the breast.")
            } else {
                format!("Diagnosed with stage {} breast cancer.", roman_to_arabic(sg))
            };
            lines.push(s);
            gold.stage_group = Some(sg);
        }
    }
    if let Some(cm) = p.tumor_size_cm {
        if present(rng) {
            let s = if rng.random::<bool>() {
                format!("Ultrasound shows a tumor measuring {} mm.", (cm * 10.0).round() as u32)
            } else {
                format!("Mass of {cm:.1} cm in the upper outer quadrant.")
            };
            lines.push(s);
            gold.tumor_size_cm = Some(cm);
        }
    }
    if let Some(g) = p.grade {
        if present(rng) {
            let n = &g.as_str()[1..];
            let s = if rng.random::<bool>() { format!("Histologic grade: {g}.") } else { format!("Nottingham grade {n}.") };
            lines.push(s);
            gold.grade = Some(g);
        }
    }
    if p.er != Biomarker::Unknown && present(rng) {
        let er = receptor_word(p.er, rng);
        let pr = receptor_word(p.pr, rng);
        let her2 = match p.her2 {
            Biomarker::Positive => *pick(rng, &["positive", "3+"]),
            _ => *pick(rng, &["negative", "1+", "0"]),
        };
        lines.push(format!("Receptor status: ER {er}, PR {pr}, HER2 {her2}."));
        (gold.er, gold.pr, gold.her2) = (p.er, p.pr, p.her2);
    }
    if let Some(e) = p.ecog {
        if present(rng) {
            lines.push(format!("ECOG performance status {e}."));
            gold.ecog = Some(e);
        }
    }
    if let Some(k) = p.karnofsky {
        if present(rng) {
            lines.push(format!("Karnofsky score of {k}."));
            gold.karnofsky = Some(k);
        }
    }
    lines.push(pick(rng, PLAN_LINES).to_string());
    lines.push(format!("Planned regimen: {}.", drugs.join(" and ")));
    (lines.join("\n"), gold)
}

/// A follow-up finding that does not meet the failure definition.
fn benign_finding(rng: &mut ChaCha8Rng, drug: &str) -> (String, OutcomeRecord) {
    let mut o = OutcomeRecord::default();
    let u = rng.random::<f64>();
    let text = if u < 0.25 {
        o.toxicity.adverse_effects = true;
        let s = pick(rng, &["Reports mild nausea managed with antiemetics.", "Grade 1 peripheral neuropathy noted on exam.", "Mild rash on the forearms, treated with topical steroid."])
            .to_string();
        o.toxicity.details = s.clone();
        s
    } else if u < 0.35 {
        o.progression.progressed = true;
        let s = format!("Imaging shows equivocal progression of a small bone lesion; plan to continue {drug} and reassess.");
        o.progression.details = s.clone();
        s
    } else if u < 0.42 {
        o.toxicity.qol_deterioration = true;
        let s = "Family reports some functional decline at home.".to_string();
        o.toxicity.details = s.clone();
        s
    } else {
        pick(rng, STABLE).to_string()
    };
    (text, o)
}

/// The failing finding; returns text, record and the date the event is
/// attributed to (note date unless a death/hospice date is stated).
fn failure_finding(rng: &mut ChaCha8Rng, cause: FailureCause, drug: &str, event_date: NaiveDate) -> (String, OutcomeRecord) {
    let mut o = OutcomeRecord::default();
    let text = match cause {
        FailureCause::ProgressionDiscontinued => {
            o.progression.progressed = true;
            o.progression.discontinued = true;
            let s = match rng.random_range(0..3) {
                0 => format!("Restaging CT demonstrates disease progression with new liver metastases, and {drug} was discontinued."),
                1 => format!("Progression in the axillary nodes; {drug} stopped and second-line options reviewed."),
                _ => "Bone scan shows new lesions consistent with progressive disease, so we switched to a different regimen.".to_string(),
            };
            o.progression.details = s.clone();
            s
        }
        FailureCause::ToxicityModified => {
            o.toxicity.adverse_effects = true;
            o.toxicity.discontinued_or_modified = true;
            let s = match rng.random_range(0..3) {
                0 => format!("Grade 3 neutropenia after the last cycle; {drug} dose reduced by 20 percent."),
                1 => format!("Severe diarrhea requiring admission, so {drug} was held this cycle."),
                _ => "Worsening neuropathy affecting function; therapy discontinued.".to_string(),
            };
            o.toxicity.details = s.clone();
            s
        }
        FailureCause::DeathOrHospice => {
            o.death_hospice.event_date = Some(event_date);
            let s = if rng.random::<bool>() {
                o.death_hospice.died = true;
                format!("The patient passed away at home on {event_date}.")
            } else {
                o.death_hospice.hospice = true;
                format!("Patient transitioned to hospice care on {event_date}.")
            };
            o.death_hospice.details = s.clone();
            s
        }
    };
    (text, o)
}

fn patient_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i as u64);
    r
}

struct Patient {
    notes: Vec<ClinicalNote>,
    emr: EmrRow,
    plans: Vec<TreatmentPlan>,
    gold: Vec<LabeledRecord>,
    truth: PatientTruth,
}

fn patient(cfg: &SynthConfig, seed: u64, i: usize) -> Patient {
    let rng = &mut patient_rng(seed, i);
    let id = format!("P{:05}", i + 1);

    let stages = [StageGroup::IA, StageGroup::IIA, StageGroup::IIB, StageGroup::IIIA, StageGroup::IIIB, StageGroup::IIIC, StageGroup::IV];
    let sg = stages[weighted(rng, &[0.2, 0.22, 0.18, 0.14, 0.06, 0.05, 0.15])];
    let (t, n, m) = stage_tnm(rng, sg);
    let grade = [Grade::G1, Grade::G2, Grade::G3][weighted(rng, &[0.2, 0.45, 0.35])];
    let ecog = weighted(rng, &[0.45, 0.35, 0.15, 0.05]) as u8;
    let karnofsky = 100 - 10 * ecog - 10 * rng.random_range(0..2u8);
    let er = if rng.random::<f64>() < 0.75 { Biomarker::Positive } else { Biomarker::Negative };
    let pr = if er == Biomarker::Positive && rng.random::<f64>() < 0.8 { Biomarker::Positive } else { Biomarker::Negative };
    let her2 = if rng.random::<f64>() < 0.2 { Biomarker::Positive } else { Biomarker::Negative };
    let size = round_to((normal(rng, 2.2, 0.9) + 0.4 * (t as u8 as f64)).clamp(0.5, 9.5), 1);
    let truth_pheno = PhenotypeRecord {
        t_stage: Some(t),
        n_stage: Some(n),
        m_stage: Some(m),
        stage_group: Some(sg),
        tumor_size_cm: Some(size),
        grade: Some(grade),
        ecog: Some(ecog),
        karnofsky: Some(karnofsky),
        er,
        pr,
        her2,
    };

    let age = normal(rng, 58.0, 11.0).clamp(25.0, 90.0).round();
    let reg = weighted(rng, &REGIMENS.iter().map(|r| r.1).collect::<Vec<_>>());
    let (drugs, _, reg_effect, mg_per_week) = REGIMENS[reg];

    let stage_effect = match sg {
        StageGroup::IV => 1.6,
        StageGroup::IIIA | StageGroup::IIIB | StageGroup::IIIC => 0.8,
        StageGroup::IIA | StageGroup::IIB => 0.3,
        _ => 0.0,
    };
    let lp = stage_effect + 0.5 * ecog as f64 + if grade == Grade::G3 { 0.4 } else { 0.0 } + 0.01 * (age - 58.0) + reg_effect;
    let u = 1.0 - rng.random::<f64>();
    let fail_t = cfg.scale_days * (-u.ln() / lp.exp()).powf(1.0 / cfg.shape);
    let censor_t = rng.random_range(cfg.censor_min_days..=cfg.censor_max_days) as f64;
    let event = fail_t <= censor_t;
    let time_days = (if event { fail_t } else { censor_t }).round().max(1.0) as u32;
    let cause = event.then(|| [FailureCause::ProgressionDiscontinued, FailureCause::ToxicityModified, FailureCause::DeathOrHospice][weighted(rng, &[0.55, 0.4, 0.05])]);

    let start = add_days(NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(), rng.random_range(0..1460));
    let weeks = rng.random_range(6..=24u32);
    let mut plan_drugs: Vec<PlanDrug> = drugs
        .iter()
        .zip(mg_per_week)
        .map(|(name, mg)| {
            let (amount, unit) = if *name == "capecitabine" { (mg * weeks as f64 / 1000.0, "g") } else { (mg * weeks as f64, "mg") };
            PlanDrug { gpi8: gpi(name).into(), name: name.to_string(), total_dose: round_to(amount, 2), dose_unit: unit.into(), weeks }
        })
        .collect();
    if rng.random::<f64>() < 0.03 {
        plan_drugs.push(PlanDrug { gpi8: UNAPPROVED.0.into(), name: UNAPPROVED.1.into(), total_dose: 10.0, dose_unit: "mg".into(), weeks });
    }
    let mut plans = vec![TreatmentPlan { patient_id: id.clone(), plan_id: format!("{id}-1"), plan_start: start, plan_end: Some(add_days(start, weeks * 7)), drugs: plan_drugs }];
    if rng.random::<f64>() < 0.05 {
        let later = add_days(start, time_days + 30);
        plans.push(TreatmentPlan {
            patient_id: id.clone(),
            plan_id: format!("{id}-2"),
            plan_start: later,
            plan_end: None,
            drugs: vec![PlanDrug { gpi8: gpi("capecitabine").into(), name: "capecitabine".into(), total_dose: 84.0, dose_unit: "g".into(), weeks: 6 }],
        });
    }

    let mut notes = Vec::new();
    let mut gold = Vec::new();
    let mut push = |notes: &mut Vec<ClinicalNote>, date: NaiveDate, kind: NoteType, text: String, ph: PhenotypeRecord, o: OutcomeRecord| {
        let note_id = format!("{id}-N{:02}", notes.len() + 1);
        gold.push(LabeledRecord { note_id: note_id.clone(), target: crate::extraction::Target::Phenotype, record: Record::Phenotype(ph) });
        gold.push(LabeledRecord { note_id: note_id.clone(), target: crate::extraction::Target::Outcome, record: Record::Outcome(o) });
        notes.push(ClinicalNote { patient_id: id.clone(), note_id, note_date: date, note_type: kind, text });
    };

    let (text, ph) = admission(rng, &truth_pheno, drugs);
    push(&mut notes, sub_days(start, rng.random_range(1..=10)), NoteType::Admission, text, ph, OutcomeRecord::default());
    let end = add_days(start, time_days);
    let mut day = rng.random_range(30..=90u32);
    let lead = drugs[0];
    while day < time_days {
        let (text, o) = benign_finding(rng, lead);
        push(&mut notes, add_days(start, day), NoteType::Progress, format!("Interval visit on cycle day {day}.\n{text}"), PhenotypeRecord::default(), o);
        day += rng.random_range(45..=120u32);
    }
    match cause {
        Some(c) => {
            let (text, o) = failure_finding(rng, c, lead, end);
            let note_date = if c == FailureCause::DeathOrHospice { add_days(end, rng.random_range(1..=3)) } else { end };
            push(&mut notes, note_date, NoteType::Progress, text, PhenotypeRecord::default(), o);
        }
        None => {
            push(&mut notes, end, NoteType::Progress, pick(rng, STABLE).to_string(), PhenotypeRecord::default(), OutcomeRecord::default());
        }
    }

    let structured = rng.random::<f64>() < cfg.structured_fraction;
    let opt = |b: bool, s: String| b.then_some(s);
    let mut codes = vec!["C50.9".to_string()];
    for (c, p) in COMORBIDITIES {
        if rng.random::<f64>() < *p {
            codes.push(c.to_string());
        }
    }
    let emr = EmrRow {
        patient_id: id.clone(),
        age,
        gender: if rng.random::<f64>() < 0.99 { "F".into() } else { "M".into() },
        bsa: (rng.random::<f64>() > 0.05).then(|| round_to(normal(rng, 1.8, 0.2).clamp(1.2, 2.6), 2)),
        srcr: (rng.random::<f64>() > 0.1).then(|| round_to(normal(rng, 0.9, 0.2).clamp(0.4, 3.0), 2)),
        readmission_score: (rng.random::<f64>() > 0.2).then(|| round_to(rng.random::<f64>(), 3)),
        icd10_codes: Some(codes.join(";")),
        t_stage: opt(structured, t.to_string()),
        n_stage: opt(structured, n.to_string()),
        m_stage: opt(structured, m.to_string()),
        stage_group: opt(structured, sg.to_string()),
        grade: opt(structured, grade.to_string()),
        er: opt(structured, er.to_string()),
        pr: opt(structured, pr.to_string()),
        her2: opt(structured, her2.to_string()),
        ecog: structured.then_some(ecog),
        karnofsky: None,
    };
    Patient { notes, emr, plans, gold, truth: PatientTruth { patient_id: id, plan_start: start, time_days, event, cause } }
}

/// Deterministic per seed; each patient draws from its own stream.
pub fn synthesize(cfg: &SynthConfig, seed: u64) -> SyntheticCorpus {
    let mut out = SyntheticCorpus {
        notes: Vec::new(),
        emr: Vec::new(),
        plans: Vec::new(),
        approved: APPROVED_DRUGS.iter().map(|(g, n)| ApprovedDrug { gpi8: g.to_string(), name: n.to_string() }).collect(),
        gold: Vec::new(),
        truth: Vec::new(),
    };
    for i in 0..cfg.n_patients {
        let p = patient(cfg, seed, i);
        out.notes.extend(p.notes);
        out.emr.push(p.emr);
        out.plans.extend(p.plans);
        out.gold.extend(p.gold);
        out.truth.push(p.truth);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPaths {
    pub corpus: PathBuf,
    pub emr: PathBuf,
    pub plans: PathBuf,
    pub drugs: PathBuf,
    pub gold: PathBuf,
    pub truth: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> SynthPaths {
        SynthPaths {
            corpus: dir.join("notes.jsonl"),
            emr: dir.join("emr.csv"),
            plans: dir.join("plans.csv"),
            drugs: dir.join("drugs.csv"),
            gold: dir.join("gold.jsonl"),
            truth: dir.join("truth.jsonl"),
        }
    }
}

fn jsonl<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

impl SyntheticCorpus {
    pub fn write_dir(&self, dir: &Path) -> io::Result<SynthPaths> {
        fs::create_dir_all(dir)?;
        let paths = SynthPaths::in_dir(dir);
        jsonl(&paths.corpus, &self.notes)?;
        jsonl(&paths.gold, &self.gold)?;
        jsonl(&paths.truth, &self.truth)?;

        let mut w = csv::Writer::from_path(&paths.emr)?;
        for r in &self.emr {
            w.serialize(r)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(&paths.plans)?;
        w.write_record(["patient_id", "plan_id", "plan_start", "plan_end", "gpi8", "drug_name", "total_dose", "dose_unit", "weeks"])?;
        for p in &self.plans {
            for d in &p.drugs {
                w.write_record([
                    p.patient_id.clone(),
                    p.plan_id.clone(),
                    p.plan_start.to_string(),
                    p.plan_end.map(|e| e.to_string()).unwrap_or_default(),
                    d.gpi8.clone(),
                    d.name.clone(),
                    d.total_dose.to_string(),
                    d.dose_unit.clone(),
                    d.weeks.to_string(),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(&paths.drugs)?;
        for d in &self.approved {
            w.serialize(d)?;
        }
        w.flush()?;
        Ok(paths)
    }
}

/// A long note with one sentence answering `query` buried in filler.
#[derive(Debug, Clone, PartialEq)]
pub struct NeedleCase {
    pub note: ClinicalNote,
    pub query: String,
    pub needle: String,
}

const FILLER: &[&str] = &[
    "Patient seen in clinic today accompanied by her daughter.",
    "Vital signs reviewed and unremarkable.",
    "Smoking status: never smoker.",
    "Insurance status verified with the front desk.",
    "Medication list reconciled with pharmacy records.",
    "Discussed diet, exercise and sleep hygiene.",
    "Denies fever, chills or night sweats.",
    "Lungs clear to auscultation bilaterally.",
    "Heart regular rate and rhythm without murmur.",
    "Abdomen soft, nontender, nondistended.",
    "Social work consulted regarding transportation.",
    "Return precautions reviewed in detail.",
    "Vaccination status up to date per registry.",
    "Hydration encouraged between visits.",
    "Labs drawn and sent to the central laboratory.",
    "The chart was reviewed for interval events.",
];

const NEEDLES: &[(&str, &str)] = &[
    ("ER PR HER2 receptor status", "Receptor status on core biopsy: ER positive, PR positive, HER2 negative."),
    ("TNM stage tumor size histologic grade", "Final pathology TNM stage T2 N1 M0 with tumor size 2.4 cm and histologic grade G2."),
    ("ECOG Karnofsky performance status", "Performance status today: ECOG 1 and Karnofsky 80."),
];

/// `filler_tokens` sets the approximate note length.
pub fn needle_case(seed: u64, i: usize, filler_tokens: usize) -> NeedleCase {
    let rng = &mut patient_rng(seed, i);
    let (query, needle) = NEEDLES[i % NEEDLES.len()];
    let mut sentences = Vec::new();
    let mut tokens = 0;
    while tokens < filler_tokens {
        let s = *pick(rng, FILLER);
        tokens += s.split_whitespace().count() + 1;
        sentences.push(s);
    }
    let at = rng.random_range(0..=sentences.len());
    sentences.insert(at, needle);
    // blank lines between paragraphs of 8 sentences keep duplicate-line
    // removal from collapsing repeats
    let text = sentences
        .chunks(8)
        .enumerate()
        .map(|(k, c)| format!("Paragraph {k}. {}", c.join(" ")))
        .collect::<Vec<_>>()
        .join("\n\n");
    NeedleCase {
        note: ClinicalNote {
            patient_id: format!("N{i:04}"),
            note_id: format!("needle-{i:04}"),
            note_date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            note_type: NoteType::Other,
            text,
        },
        query: query.to_string(),
        needle: needle.to_string(),
    }
}

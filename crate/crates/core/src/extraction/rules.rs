//! Regex lexicon over note text. One table feeds both the rule-based
//! backend and the grounding check, so anything the rule backend emits is
//! grounded by construction.

use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;

use super::schema::{
    Biomarker, DeathHospice, Grade, MStage, NStage, OutcomeRecord, PhenotypeRecord, Progression, StageGroup, TStage,
    Toxicity, TUMOR_SIZE_LIMIT_CM,
};

fn re(pattern: &str) -> Regex {
    Regex::new(pattern).expect("static pattern")
}

static SENTENCE_END: LazyLock<Regex> = LazyLock::new(|| re(r"[.!?](?:\s|$)|\n"));
static CLAUSE_BREAK: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)[,;:]|\bbut\b|\bhowever\b"));
static NEGATION: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:no|not|without|denies|denied|negative for|free of|absence of|ruled out|resolved)\b")
});

static T_STAGE: LazyLock<Regex> = LazyLock::new(|| re(r"\b(?:yp|[cpy])?T(is|[0-4X])[a-d]?(?:\s*N[0-3X]|\b)"));
static N_STAGE: LazyLock<Regex> = LazyLock::new(|| re(r"(?:\b(?:yp|[cpy])?|T(?:is|[0-4X])[a-d]?\s*)N([0-3X])[a-c]?(?:\s*M[01X]|\b)"));
static M_STAGE: LazyLock<Regex> = LazyLock::new(|| re(r"(?:\b(?:yp|[cpy])?|N[0-3X][a-c]?\s*)M([01X])\b"));
static STAGE_ROMAN: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\bstage\s+(IIIA|IIIB|IIIC|IIA|IIB|IA|IB|IV|III|II|I|0)\b"));
static STAGE_ARABIC: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\bstage\s+([1-4])([abc])?\b"));
static TUMOR_SIZE: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:tumou?r|mass|lesion)\b[^.\n]{0,40}?\b(\d{1,3}(?:\.\d+)?)\s*(cm|mm)\b")
});
static GRADE_NAMED: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:histologic(?:al)?|nuclear|tumou?r|nottingham|histological)\s+grade\s*(?:is\s+|:\s*)?G?([1-4X])\b")
});
static GRADE_CODE: LazyLock<Regex> = LazyLock::new(|| re(r"\bG([1-4X])\b"));
static ECOG: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\bECOG(?:\s+performance\s+status|\s+PS)?\s*(?:score\s*)?(?:is\s+|of\s+|=\s*|:\s*)?([0-5])\b")
});
static KARNOFSKY: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:Karnofsky(?:\s+performance\s+(?:status|score))?|KPS)\s*(?:score\s*)?(?:is\s+|of\s+|=\s*|:\s*)?(\d{1,3})\b")
});
const RECEPTOR_VALUE: &str = r"\s*(?:status\s*)?(?:is\s+|was\s+)?(?::\s*|-\s*)?(positive|negative|pos\b|neg\b|3\+|1\+|0\b|\+|-)";
static ER: LazyLock<Regex> =
    LazyLock::new(|| re(&format!(r"(?i)\b(?:ER|estrogen\s+receptor){RECEPTOR_VALUE}")));
static PR: LazyLock<Regex> =
    LazyLock::new(|| re(&format!(r"(?i)\b(?:PR|PgR|progesterone\s+receptor){RECEPTOR_VALUE}")));
static HER2: LazyLock<Regex> = LazyLock::new(|| re(&format!(r"(?i)\bHER-?2(?:/neu)?{RECEPTOR_VALUE}")));

static PROGRESSION: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:progress(?:ion|ed|ing|ive)|new\s+(?:metasta\w*|lesions?)|recurren(?:ce|t)|worsening\s+disease|enlarging\s+(?:mass|lesions?))\b")
});
static DISCONTINUATION: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:discontinu\w*|stopp(?:ed|ing)|ceased|terminated|switch(?:ed|ing)\s+to)\b")
});
static TOXICITY: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:toxicit(?:y|ies)|adverse\s+(?:events?|effects?|reactions?)|side\s+effects?|neuropath\w*|neutropeni\w*|thrombocytopeni\w*|mucositis|nausea|vomiting|diarrh(?:o)?ea|cardiotoxicit\w*|hand-foot\s+syndrome|rash)\b")
});
static QOL: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:quality\s+of\s+life|functional\s+decline|decline\s+in\s+(?:functional|performance)\s+status|deconditioning|bedbound|unable\s+to\s+perform\s+(?:daily|ADLs?))\b")
});
static MODIFICATION: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:discontinu\w*|dose[-\s](?:reduc\w*|delay\w*|modif\w*|held)|doses?\s+(?:was|were|has\s+been|is)\s+(?:reduc\w*|lowered|decreased|adjusted)|(?:reduc(?:ed|tion)|lowered|decreased)\s+(?:the\s+)?dose|held|holding|modif(?:ied|ication)|delayed|stopp(?:ed|ing))\b")
});
static DEATH: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(?:died|expired|passed\s+away|deceased|death\s+(?:occurred|on))\b"));
static HOSPICE: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\bhospice\b"));
static DATE: LazyLock<Regex> = LazyLock::new(|| re(r"\b(\d{4}-\d{2}-\d{2})\b"));

/// Sentences of `text` as byte ranges.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for m in SENTENCE_END.find_iter(text) {
        let s = &text[start..m.end()];
        if !s.trim().is_empty() {
            out.push(s);
        }
        start = m.end();
    }
    if !text[start..].trim().is_empty() {
        out.push(&text[start..]);
    }
    out
}

/// A match at `at` is negated when a negation cue precedes it inside the same clause.
fn negated(sentence: &str, at: usize) -> bool {
    let clause_start = CLAUSE_BREAK
        .find_iter(&sentence[..at])
        .last()
        .map(|m| m.end())
        .unwrap_or(0);
    NEGATION.is_match(&sentence[clause_start..at])
}

fn affirmed(sentence: &str, pattern: &Regex) -> bool {
    pattern.find_iter(sentence).any(|m| !negated(sentence, m.start()))
}

/// Every phenotype value stated in a text, in order of appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhenotypeMentions {
    pub t_stage: Vec<TStage>,
    pub n_stage: Vec<NStage>,
    pub m_stage: Vec<MStage>,
    pub stage_group: Vec<StageGroup>,
    pub tumor_size_cm: Vec<f64>,
    pub grade: Vec<Grade>,
    pub ecog: Vec<u8>,
    pub karnofsky: Vec<u8>,
    pub er: Vec<Biomarker>,
    pub pr: Vec<Biomarker>,
    pub her2: Vec<Biomarker>,
}

fn captures<T>(text: &str, pattern: &Regex, mut map: impl FnMut(&regex::Captures) -> Option<T>) -> Vec<T> {
    pattern.captures_iter(text).filter_map(|c| map(&c)).collect()
}

fn receptor(raw: &str) -> Option<Biomarker> {
    match raw.to_ascii_lowercase().as_str() {
        "positive" | "pos" | "+" | "3+" => Some(Biomarker::Positive),
        "negative" | "neg" | "-" | "0" | "1+" => Some(Biomarker::Negative),
        _ => None,
    }
}

fn stage_from_arabic(num: &str, letter: Option<&str>) -> Option<StageGroup> {
    let roman = match num {
        "1" => "I",
        "2" => "II",
        "3" => "III",
        "4" => "IV",
        _ => return None,
    };
    let mut s = roman.to_string();
    if let Some(l) = letter {
        s.push_str(&l.to_ascii_uppercase());
    }
    StageGroup::parse(&s)
}

pub fn phenotype_mentions(text: &str) -> PhenotypeMentions {
    let mut stage_group = captures(text, &STAGE_ROMAN, |c| StageGroup::parse(&c[1].to_ascii_uppercase()));
    stage_group.extend(captures(text, &STAGE_ARABIC, |c| {
        stage_from_arabic(&c[1], c.get(2).map(|m| m.as_str()))
    }));
    let mut grade = captures(text, &GRADE_NAMED, |c| Grade::parse(&format!("G{}", c[1].to_ascii_uppercase())));
    grade.extend(captures(text, &GRADE_CODE, |c| Grade::parse(&format!("G{}", &c[1]))));
    PhenotypeMentions {
        t_stage: captures(text, &T_STAGE, |c| TStage::parse(&format!("T{}", &c[1]))),
        n_stage: captures(text, &N_STAGE, |c| NStage::parse(&format!("N{}", &c[1]))),
        m_stage: captures(text, &M_STAGE, |c| MStage::parse(&format!("M{}", &c[1]))),
        stage_group,
        tumor_size_cm: captures(text, &TUMOR_SIZE, |c| {
            let v: f64 = c[1].parse().ok()?;
            let cm = if c[2].eq_ignore_ascii_case("mm") { v / 10.0 } else { v };
            (cm < TUMOR_SIZE_LIMIT_CM).then_some(cm)
        }),
        grade,
        ecog: captures(text, &ECOG, |c| c[1].parse().ok()),
        karnofsky: captures(text, &KARNOFSKY, |c| {
            let v: u8 = c[1].parse().ok()?;
            (v <= 100 && v.is_multiple_of(10)).then_some(v)
        }),
        er: captures(text, &ER, |c| receptor(&c[1])),
        pr: captures(text, &PR, |c| receptor(&c[1])),
        her2: captures(text, &HER2, |c| receptor(&c[1])),
    }
}

/// Affirmed (non-negated) outcome cues found in a text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutcomeMentions {
    pub progression: bool,
    pub discontinuation: bool,
    pub progression_with_discontinuation: bool,
    pub toxicity: bool,
    pub qol: bool,
    pub modification: bool,
    pub toxicity_with_modification: bool,
    pub death: bool,
    pub hospice: bool,
    /// Dates written in sentences carrying an affirmed death or hospice cue.
    pub event_dates: Vec<NaiveDate>,
    /// Every ISO date in the text.
    pub dates: Vec<NaiveDate>,
    pub progression_sentences: Vec<String>,
    pub toxicity_sentences: Vec<String>,
    pub death_sentences: Vec<String>,
}

fn dates_in(text: &str) -> Vec<NaiveDate> {
    DATE.captures_iter(text)
        .filter_map(|c| NaiveDate::parse_from_str(&c[1], "%Y-%m-%d").ok())
        .collect()
}

pub fn outcome_mentions(text: &str) -> OutcomeMentions {
    let mut m = OutcomeMentions { dates: dates_in(text), ..Default::default() };
    for s in sentences(text) {
        let prog = affirmed(s, &PROGRESSION);
        let disc = affirmed(s, &DISCONTINUATION);
        let tox = affirmed(s, &TOXICITY);
        let qol = affirmed(s, &QOL);
        let modif = affirmed(s, &MODIFICATION);
        let death = affirmed(s, &DEATH);
        let hospice = affirmed(s, &HOSPICE);
        m.progression |= prog;
        m.discontinuation |= disc;
        m.progression_with_discontinuation |= prog && disc;
        m.toxicity |= tox;
        m.qol |= qol;
        m.modification |= modif;
        m.toxicity_with_modification |= tox && modif;
        m.death |= death;
        m.hospice |= hospice;
        let s_trim = s.trim().to_string();
        if prog {
            m.progression_sentences.push(s_trim.clone());
        }
        if tox || qol {
            m.toxicity_sentences.push(s_trim.clone());
        }
        if death || hospice {
            m.event_dates.extend(dates_in(s));
            m.death_sentences.push(s_trim);
        }
    }
    m
}

/// Rule-based phenotype extraction: first stated value per field.
pub fn extract_phenotype(text: &str) -> PhenotypeRecord {
    let m = phenotype_mentions(text);
    PhenotypeRecord {
        t_stage: m.t_stage.first().copied(),
        n_stage: m.n_stage.first().copied(),
        m_stage: m.m_stage.first().copied(),
        stage_group: m.stage_group.first().copied(),
        tumor_size_cm: m.tumor_size_cm.first().copied(),
        grade: m.grade.first().copied(),
        ecog: m.ecog.first().copied(),
        karnofsky: m.karnofsky.first().copied(),
        er: m.er.first().copied().unwrap_or(Biomarker::Unknown),
        pr: m.pr.first().copied().unwrap_or(Biomarker::Unknown),
        her2: m.her2.first().copied().unwrap_or(Biomarker::Unknown),
    }
}

/// Rule-based outcome extraction. Discontinuation flags need the cause
/// and the action in the same sentence.
pub fn extract_outcome(text: &str) -> OutcomeRecord {
    let m = outcome_mentions(text);
    let died = m.death;
    let hospice = m.hospice;
    OutcomeRecord {
        progression: Progression {
            progressed: m.progression,
            discontinued: m.progression_with_discontinuation,
            details: m.progression_sentences.join(" "),
        },
        toxicity: Toxicity {
            adverse_effects: m.toxicity,
            qol_deterioration: m.qol,
            discontinued_or_modified: m.toxicity_with_modification,
            details: m.toxicity_sentences.join(" "),
        },
        death_hospice: DeathHospice {
            died,
            hospice,
            event_date: if died || hospice { m.event_dates.first().copied() } else { None },
            details: m.death_sentences.join(" "),
        },
    }
}

//! Validate-then-ground loop around a completion backend.

use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, Tokenizer};

use super::backend::LlmBackend;
use super::prompt::{build_prompt, ExtractionRequest, Feedback};
use super::rules::{outcome_mentions, phenotype_mentions};
use super::schema::{parse_and_validate, Biomarker, OutcomeRecord, PhenotypeRecord, Record, ValidationFailure, Violation};
use super::ExtractionError;

pub const SIZE_TOLERANCE_CM: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub valid_json: bool,
    pub schema_ok: bool,
    pub grounded: bool,
    pub violations: Vec<Violation>,
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    pub max_retries: u32,
    pub context_limit_tokens: usize,
    pub tokenizer: Tokenizer,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig { max_retries: 3, context_limit_tokens: 8192, tokenizer: Tokenizer::UnicodeWord }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub record: Record,
    pub verdict: CriticVerdict,
    pub attempts: u32,
    /// Fields forced to null/false/unknown after retries ran out.
    pub forced_fields: Vec<String>,
    pub dropped_chunk_ids: Vec<String>,
}

fn ungrounded(field: &str, value: impl std::fmt::Display) -> Violation {
    Violation::new(field, format!("value {value} is not supported by the note chunks"))
}

fn check_phenotype(p: &PhenotypeRecord, text: &str) -> Vec<Violation> {
    let m = phenotype_mentions(text);
    let mut v = Vec::new();
    macro_rules! exact {
        ($field:ident) => {
            if let Some(x) = p.$field {
                if !m.$field.contains(&x) {
                    v.push(ungrounded(stringify!($field), x));
                }
            }
        };
    }
    exact!(t_stage);
    exact!(n_stage);
    exact!(m_stage);
    exact!(stage_group);
    if let Some(x) = p.tumor_size_cm {
        if !m.tumor_size_cm.iter().any(|y| (x - y).abs() <= SIZE_TOLERANCE_CM) {
            v.push(ungrounded("tumor_size_cm", x));
        }
    }
    exact!(grade);
    exact!(ecog);
    exact!(karnofsky);
    for (field, value, seen) in [("er", p.er, &m.er), ("pr", p.pr, &m.pr), ("her2", p.her2, &m.her2)] {
        if value != Biomarker::Unknown && !seen.contains(&value) {
            v.push(ungrounded(field, value));
        }
    }
    v
}

fn check_outcome(o: &OutcomeRecord, text: &str) -> Vec<Violation> {
    let m = outcome_mentions(text);
    let mut v = Vec::new();
    let flags = [
        ("progression.progressed", o.progression.progressed, m.progression),
        ("progression.discontinued", o.progression.discontinued, m.progression_with_discontinuation),
        ("toxicity.adverse_effects", o.toxicity.adverse_effects, m.toxicity),
        ("toxicity.qol_deterioration", o.toxicity.qol_deterioration, m.qol),
        ("toxicity.discontinued_or_modified", o.toxicity.discontinued_or_modified, m.toxicity_with_modification),
        ("death_hospice.died", o.death_hospice.died, m.death),
        ("death_hospice.hospice", o.death_hospice.hospice, m.hospice),
    ];
    for (field, claimed, supported) in flags {
        if claimed && !supported {
            v.push(ungrounded(field, true));
        }
    }
    if let Some(d) = o.death_hospice.event_date {
        if !m.dates.contains(&d) {
            v.push(ungrounded("death_hospice.event_date", d));
        }
    }
    v
}

fn joined(chunks: &[Chunk]) -> String {
    chunks.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join("\n")
}

/// Non-null values and positive flags without a matching mention in the
/// chunks. Free-text `details` fields are not checked.
pub fn ground_check(record: &Record, chunks: &[Chunk]) -> Vec<Violation> {
    let text = joined(chunks);
    match record {
        Record::Phenotype(p) => check_phenotype(p, &text),
        Record::Outcome(o) => check_outcome(o, &text),
    }
}

/// Resets every ungrounded field to its null value.
pub fn fail_safe(record: &Record, violations: &[Violation]) -> (Record, Vec<String>) {
    let mut forced = Vec::new();
    let mut rec = record.clone();
    for viol in violations {
        let f = viol.field.as_str();
        let hit = match &mut rec {
            Record::Phenotype(p) => match f {
                "t_stage" => p.t_stage.take().is_some(),
                "n_stage" => p.n_stage.take().is_some(),
                "m_stage" => p.m_stage.take().is_some(),
                "stage_group" => p.stage_group.take().is_some(),
                "tumor_size_cm" => p.tumor_size_cm.take().is_some(),
                "grade" => p.grade.take().is_some(),
                "ecog" => p.ecog.take().is_some(),
                "karnofsky" => p.karnofsky.take().is_some(),
                "er" => std::mem::replace(&mut p.er, Biomarker::Unknown) != Biomarker::Unknown,
                "pr" => std::mem::replace(&mut p.pr, Biomarker::Unknown) != Biomarker::Unknown,
                "her2" => std::mem::replace(&mut p.her2, Biomarker::Unknown) != Biomarker::Unknown,
                _ => false,
            },
            Record::Outcome(o) => match f {
                "progression.progressed" => std::mem::take(&mut o.progression.progressed),
                "progression.discontinued" => std::mem::take(&mut o.progression.discontinued),
                "toxicity.adverse_effects" => std::mem::take(&mut o.toxicity.adverse_effects),
                "toxicity.qol_deterioration" => std::mem::take(&mut o.toxicity.qol_deterioration),
                "toxicity.discontinued_or_modified" => std::mem::take(&mut o.toxicity.discontinued_or_modified),
                "death_hospice.died" => std::mem::take(&mut o.death_hospice.died),
                "death_hospice.hospice" => std::mem::take(&mut o.death_hospice.hospice),
                "death_hospice.event_date" => o.death_hospice.event_date.take().is_some(),
                _ => false,
            },
        };
        if hit {
            forced.push(viol.field.clone());
        }
    }
    if let Record::Outcome(o) = &mut rec {
        let d = &mut o.death_hospice;
        if !d.died && !d.hospice && d.event_date.take().is_some() {
            forced.push("death_hospice.event_date".into());
        }
    }
    (rec, forced)
}

/// Runs up to `max_retries` attempts. Each rejected attempt feeds its
/// output and violations into the next prompt. When attempts run out the
/// last schema-valid record is kept with ungrounded fields reset, or an
/// empty record if none parsed.
pub fn extract_with_critic(
    req: &ExtractionRequest,
    backend: &dyn LlmBackend,
    cfg: &CriticConfig,
) -> Result<Extraction, ExtractionError> {
    let max = cfg.max_retries.max(1);
    let mut feedback: Option<Feedback> = None;
    let mut last_valid: Option<Record> = None;
    let mut verdict = CriticVerdict { valid_json: false, schema_ok: false, grounded: false, violations: Vec::new(), attempt: 0 };
    let mut dropped = Vec::new();
    let mut included_chunks: &[Chunk] = &req.chunks;

    for attempt in 1..=max {
        let prompt = build_prompt(req, feedback.as_ref(), cfg.context_limit_tokens, cfg.tokenizer)?;
        included_chunks = &req.chunks[..prompt.included];
        dropped = prompt.dropped_chunk_ids.clone();
        let raw = backend
            .complete(&prompt.text)
            .map_err(|source| ExtractionError::ExtractionFailed { note_id: req.note_id.clone(), source })?;

        let violations = match parse_and_validate(&raw, req.schema_id()) {
            Err(ValidationFailure::NoJsonFound) => {
                verdict = CriticVerdict { valid_json: false, schema_ok: false, grounded: false, violations: Vec::new(), attempt };
                vec![Violation::new("$", "no JSON object found in the answer")]
            }
            Err(ValidationFailure::SchemaViolation(vs)) => {
                verdict = CriticVerdict { valid_json: true, schema_ok: false, grounded: false, violations: vs.clone(), attempt };
                vs
            }
            Err(ValidationFailure::UnknownSchema(id)) => unreachable!("request targets a known schema, got {id}"),
            Ok(record) => {
                let vs = ground_check(&record, included_chunks);
                let grounded = vs.is_empty();
                verdict = CriticVerdict { valid_json: true, schema_ok: true, grounded, violations: vs.clone(), attempt };
                if grounded {
                    return Ok(Extraction { record, verdict, attempts: attempt, forced_fields: Vec::new(), dropped_chunk_ids: dropped });
                }
                last_valid = Some(record);
                vs
            }
        };
        log::debug!("note {} attempt {attempt}: {} violation(s)", req.note_id, violations.len());
        feedback = Some(Feedback { prior_output: raw, violations });
    }

    let (record, forced_fields) = match last_valid {
        Some(rec) => {
            let vs = ground_check(&rec, included_chunks);
            fail_safe(&rec, &vs)
        }
        None => (Record::empty(req.target), Vec::new()),
    };
    log::warn!("note {}: {:?} retries exhausted, forced {} field(s)", req.note_id, req.target, forced_fields.len());
    Ok(Extraction { record, verdict, attempts: max, forced_fields, dropped_chunk_ids: dropped })
}

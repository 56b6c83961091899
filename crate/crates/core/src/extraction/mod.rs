//! Retrieval-augmented structured extraction from clinical notes.

pub mod backend;
pub mod critic;
pub mod evaluate;
pub mod prompt;
pub mod rules;
pub mod schema;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{chunk_note, preprocess_note, ClinicalNote, CorpusConfig, CorpusError};
use crate::exec::{map_slice, with_workers, Execution};
use crate::retrieval::{retrieve_for_queries, EmbeddingProvider, RetrievalConfig, RetrievalError};

pub use backend::{BackendError, HttpChatBackend, HttpChatConfig, LlmBackend, MockBackend, RuleBackend};
pub use critic::{extract_with_critic, ground_check, CriticConfig, CriticVerdict, Extraction};
pub use evaluate::{evaluate_extractions, ExtractionScores, LabeledRecord};
pub use prompt::{build_prompt, default_shots, ExtractionRequest, Exemplar};
pub use schema::{parse_and_validate, OutcomeRecord, PhenotypeRecord, Record, Target, ValidationFailure, Violation};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("prompt for note {note_id} needs {needed} tokens, limit is {limit}")]
    PromptTooLong { note_id: String, needed: usize, limit: usize },
    #[error("extraction failed for note {note_id}: {source}")]
    ExtractionFailed { note_id: String, source: BackendError },
    #[error("predictions and gold do not align (missing predictions: {missing_predictions:?}, missing gold: {missing_gold:?})")]
    AlignmentError { missing_predictions: Vec<String>, missing_gold: Vec<String> },
    #[error("note {note_id}: {source}")]
    Corpus { note_id: String, source: CorpusError },
    #[error("retrieval failed for note {note_id}: {source}")]
    Retrieval { note_id: String, source: RetrievalError },
}

impl ExtractionError {
    pub fn note_id(&self) -> Option<&str> {
        match self {
            ExtractionError::PromptTooLong { note_id, .. }
            | ExtractionError::ExtractionFailed { note_id, .. }
            | ExtractionError::Corpus { note_id, .. }
            | ExtractionError::Retrieval { note_id, .. } => Some(note_id),
            ExtractionError::AlignmentError { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    pub shots: usize,
    pub critic: CriticConfig,
    pub phenotype_queries: Vec<String>,
    pub outcome_queries: Vec<String>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        let q = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        ExtractionConfig {
            shots: 3,
            critic: CriticConfig::default(),
            phenotype_queries: q(&[
                "TNM stage tumor size histologic grade",
                "ER PR HER2 receptor status",
                "ECOG Karnofsky performance status",
            ]),
            outcome_queries: q(&[
                "disease progression new metastases recurrence treatment discontinued",
                "toxicity adverse effects dose reduced held quality of life decline",
                "patient died death hospice",
            ]),
        }
    }
}

impl ExtractionConfig {
    pub fn queries(&self, target: Target) -> &[String] {
        match target {
            Target::Phenotype => &self.phenotype_queries,
            Target::Outcome => &self.outcome_queries,
        }
    }
}

/// One line of extraction output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionLine {
    pub patient_id: String,
    pub note_id: String,
    pub note_date: NaiveDate,
    pub target: Target,
    pub record: Record,
    pub verdict: CriticVerdict,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forced_fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_chunk_ids: Vec<String>,
}

/// Shared, read-only context for a batch of notes.
pub struct Pipeline<'a> {
    pub corpus: &'a CorpusConfig,
    pub retrieval: &'a RetrievalConfig,
    pub extraction: &'a ExtractionConfig,
    pub embedder: &'a dyn EmbeddingProvider,
    pub backend: &'a dyn LlmBackend,
}

impl Pipeline<'_> {
    /// Preprocess, chunk, retrieve and extract one note for each target.
    pub fn extract_note(&self, note: &ClinicalNote, targets: &[Target]) -> Result<Vec<ExtractionLine>, ExtractionError> {
        let corpus_err = |source| ExtractionError::Corpus { note_id: note.note_id.clone(), source };
        let clean = preprocess_note(&note.text).map_err(corpus_err)?;
        let prepared = ClinicalNote { text: clean, ..note.clone() };
        let chunks = chunk_note(&prepared, self.corpus).map_err(corpus_err)?;
        let mut out = Vec::with_capacity(targets.len());
        for &target in targets {
            let ranked = retrieve_for_queries(
                self.extraction.queries(target),
                &chunks,
                self.embedder,
                self.retrieval,
                self.corpus.tokenizer,
            )
            .map_err(|source| ExtractionError::Retrieval { note_id: note.note_id.clone(), source })?;
            let req = ExtractionRequest {
                target,
                note_id: note.note_id.clone(),
                chunks: ranked.into_iter().map(|s| s.chunk).collect(),
                shots: default_shots(target, self.extraction.shots),
            };
            let ex = extract_with_critic(&req, self.backend, &self.extraction.critic)?;
            out.push(ExtractionLine {
                patient_id: note.patient_id.clone(),
                note_id: note.note_id.clone(),
                note_date: note.note_date,
                target,
                record: ex.record,
                verdict: ex.verdict,
                attempts: ex.attempts,
                forced_fields: ex.forced_fields,
                dropped_chunk_ids: ex.dropped_chunk_ids,
            });
        }
        Ok(out)
    }

    /// Extracts every note on a pool of `workers` threads (0 = all cores).
    /// Results keep input order; one note's failure does not stop the rest.
    pub fn extract_all(
        &self,
        notes: &[ClinicalNote],
        targets: &[Target],
        workers: usize,
        exec: Execution,
    ) -> Vec<Result<Vec<ExtractionLine>, ExtractionError>> {
        with_workers(workers, || map_slice(notes, exec, |n| self.extract_note(n, targets)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NoteType;
    use crate::retrieval::HashedBowEmbedder;

    fn note(id: &str, text: &str) -> ClinicalNote {
        ClinicalNote {
            patient_id: "p1".into(),
            note_id: id.into(),
            note_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            note_type: NoteType::Progress,
            text: text.into(),
        }
    }

    #[test]
    fn pipeline_runs_both_targets() {
        let (c, r, e) = (CorpusConfig::default(), RetrievalConfig::default(), ExtractionConfig::default());
        let emb = HashedBowEmbedder::default();
        let p = Pipeline { corpus: &c, retrieval: &r, extraction: &e, embedder: &emb, backend: &RuleBackend };
        let notes = vec![
            note("a", "Stage IIA, T2 N0 M0. ER positive.\n\nCT shows disease progression; letrozole discontinued."),
            note("b", "   "),
        ];
        let out = p.extract_all(&notes, Target::ALL, 2, Execution::Parallel);
        let lines = out[0].as_ref().unwrap();
        assert_eq!(lines.len(), 2);
        let Record::Phenotype(ph) = &lines[0].record else { panic!() };
        assert_eq!(ph.stage_group, Some(schema::StageGroup::IIA));
        let Record::Outcome(o) = &lines[1].record else { panic!() };
        assert!(o.progression.discontinued);
        assert!(matches!(out[1], Err(ExtractionError::Corpus { ref note_id, .. }) if note_id == "b"));
    }

    #[test]
    fn line_round_trips_through_json() {
        let line = ExtractionLine {
            patient_id: "p".into(),
            note_id: "n".into(),
            note_date: NaiveDate::from_ymd_opt(2020, 2, 2).unwrap(),
            target: Target::Outcome,
            record: Record::empty(Target::Outcome),
            verdict: CriticVerdict { valid_json: true, schema_ok: true, grounded: true, violations: vec![], attempt: 1 },
            attempts: 1,
            forced_fields: vec![],
            dropped_chunk_ids: vec![],
        };
        let s = serde_json::to_string(&line).unwrap();
        assert_eq!(serde_json::from_str::<ExtractionLine>(&s).unwrap(), line);
    }
}

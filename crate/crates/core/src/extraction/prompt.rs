//! Few-shot prompt assembly.
//!
//! Layout: instruction, schema, exemplars, retrieved chunks, output
//! directive, then (on retries) the rejected answer and its violations.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{token_count, Chunk, Tokenizer};

use super::schema::{schema_json, Target, Violation};
use super::ExtractionError;

pub const CHUNK_OPEN: &str = "<<<CHUNK id=";
pub const CHUNK_CLOSE: &str = "<<<END CHUNK>>>";
pub const TARGET_PREFIX: &str = "TARGET: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub note: String,
    pub output: Value,
}

const PHENOTYPE_SHOTS: &str = include_str!("../../fixtures/shots/phenotype.json");
const OUTCOME_SHOTS: &str = include_str!("../../fixtures/shots/outcome.json");

/// The shipped exemplars for a target, first `k` of them.
pub fn default_shots(target: Target, k: usize) -> Vec<Exemplar> {
    let raw = match target {
        Target::Phenotype => PHENOTYPE_SHOTS,
        Target::Outcome => OUTCOME_SHOTS,
    };
    let all: Vec<Exemplar> = serde_json::from_str(raw).expect("shipped exemplars are valid JSON");
    all.into_iter().take(k).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionRequest {
    pub target: Target,
    pub note_id: String,
    /// Chunks in rank order, best first.
    pub chunks: Vec<Chunk>,
    pub shots: Vec<Exemplar>,
}

impl ExtractionRequest {
    pub fn schema_id(&self) -> &'static str {
        self.target.schema_id()
    }
}

/// A rejected answer fed back on the next attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub prior_output: String,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltPrompt {
    pub text: String,
    /// How many of the request's chunks made it in (a prefix, by rank).
    pub included: usize,
    pub dropped_chunk_ids: Vec<String>,
    pub token_estimate: usize,
}

impl BuiltPrompt {
    pub fn truncated(&self) -> bool {
        !self.dropped_chunk_ids.is_empty()
    }
}

fn instruction(target: Target) -> &'static str {
    match target {
        Target::Phenotype => {
            "You extract tumor characteristics from oncology clinical notes: TNM stage, stage group, tumor size in cm, \
             histologic grade, ECOG and Karnofsky performance status, and ER/PR/HER2 receptor status. \
             Report only values written in the note chunks. Use null for anything not stated, and \"unknown\" for \
             receptors that are not stated."
        }
        Target::Outcome => {
            "You extract treatment outcomes from oncology clinical notes: disease progression and whether treatment \
             was discontinued because of it, adverse effects and quality-of-life decline and whether treatment was \
             modified because of them, and death or hospice transition with its date. \
             Set a flag to true only when the note chunks state it. Negated findings are false."
        }
    }
}

fn header(target: Target, shots: &[Exemplar]) -> String {
    let mut s = String::new();
    s.push_str(instruction(target));
    s.push_str("\n\n");
    s.push_str(TARGET_PREFIX);
    s.push_str(target.as_str());
    s.push_str("\n\nJSON SCHEMA:\n");
    s.push_str(&serde_json::to_string_pretty(&schema_json(target)).expect("schema serializes"));
    s.push('\n');
    if !shots.is_empty() {
        s.push_str("\nEXAMPLES:\n");
        for (i, shot) in shots.iter().enumerate() {
            s.push_str(&format!("<<<EXAMPLE {}>>>\nNOTE:\n{}\nJSON:\n{}\n<<<END EXAMPLE>>>\n", i + 1, shot.note, shot.output));
        }
    }
    s.push_str("\nNOTE CHUNKS:\n");
    s
}

fn chunk_block(rank: usize, chunk: &Chunk) -> String {
    format!("{CHUNK_OPEN}{} rank={}>>>\n{}\n{CHUNK_CLOSE}\n", chunk.id(), rank + 1, chunk.text)
}

fn trailer(feedback: Option<&Feedback>) -> String {
    let mut s = String::from("\nOUTPUT: Respond with a single JSON object that conforms to the schema. No prose, no code fences.\n");
    if let Some(fb) = feedback {
        s.push_str("\nYOUR PREVIOUS ANSWER WAS REJECTED.\nPrevious answer:\n");
        s.push_str(&fb.prior_output);
        s.push_str("\nProblems:\n");
        for v in &fb.violations {
            s.push_str(&format!("- {v}\n"));
        }
        s.push_str("Answer again using only information stated in the note chunks.\n");
    }
    s
}

/// Builds the prompt, dropping the lowest-ranked chunks until it fits in
/// `context_limit` tokens. Fails only when no chunk fits.
pub fn build_prompt(
    req: &ExtractionRequest,
    feedback: Option<&Feedback>,
    context_limit: usize,
    tokenizer: Tokenizer,
) -> Result<BuiltPrompt, ExtractionError> {
    let head = header(req.target, &req.shots);
    let tail = trailer(feedback);
    let fixed = token_count(&head, tokenizer) + token_count(&tail, tokenizer);
    let blocks: Vec<String> = req.chunks.iter().enumerate().map(|(r, c)| chunk_block(r, c)).collect();

    let mut used = fixed;
    let mut included = 0;
    for b in &blocks {
        let cost = token_count(b, tokenizer);
        if used + cost > context_limit {
            break;
        }
        used += cost;
        included += 1;
    }
    if included == 0 && !blocks.is_empty() {
        let needed = fixed + token_count(&blocks[0], tokenizer);
        return Err(ExtractionError::PromptTooLong { note_id: req.note_id.clone(), needed, limit: context_limit });
    }
    if fixed > context_limit {
        return Err(ExtractionError::PromptTooLong { note_id: req.note_id.clone(), needed: fixed, limit: context_limit });
    }

    let mut text = head;
    for b in &blocks[..included] {
        text.push_str(b);
    }
    text.push_str(&tail);
    let dropped_chunk_ids: Vec<String> = req.chunks[included..].iter().map(Chunk::id).collect();
    if !dropped_chunk_ids.is_empty() {
        log::warn!("note {}: prompt truncated, dropped {} chunk(s)", req.note_id, dropped_chunk_ids.len());
    }
    Ok(BuiltPrompt { text, included, dropped_chunk_ids, token_estimate: used })
}

/// Target named in a prompt, if any.
pub fn prompt_target(prompt: &str) -> Option<Target> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(TARGET_PREFIX))
        .and_then(|t| Target::parse(t.trim()))
}

/// Texts of the chunk blocks in a prompt, in order.
pub fn prompt_chunks(prompt: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = prompt;
    while let Some(open) = rest.find(CHUNK_OPEN) {
        let after = &rest[open..];
        let Some(body_start) = after.find(">>>\n").map(|i| i + 4) else { break };
        let Some(close) = after[body_start..].find(CHUNK_CLOSE) else { break };
        out.push(after[body_start..body_start + close].trim_end_matches('\n'));
        rest = &after[body_start + close + CHUNK_CLOSE.len()..];
    }
    out
}

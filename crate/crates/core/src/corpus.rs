//! Clinical note ingestion: preprocessing, tokenization and chunking.

use std::collections::HashSet;
use std::io::BufRead;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("note is empty after preprocessing")]
    EmptyNote,
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("{} invalid corpus line(s); first: line {}: {}", .0.len(), .0[0].line, .0[0].reason)]
    InvalidLines(Vec<LineError>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoteType {
    Admission,
    Progress,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClinicalNote {
    pub patient_id: String,
    pub note_id: String,
    pub note_date: NaiveDate,
    pub note_type: NoteType,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub note_id: String,
    pub chunk_index: usize,
    pub text: String,
    pub token_count: usize,
    /// Byte range of `text` within the preprocessed note.
    pub byte_start: usize,
    pub byte_end: usize,
}

impl Chunk {
    /// `note_id#chunk_index`
    pub fn id(&self) -> String {
        format!("{}#{}", self.note_id, self.chunk_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tokenizer {
    Whitespace,
    #[default]
    UnicodeWord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub chunk_size_limit: usize,
    pub chunk_overlap: usize,
    pub tokenizer: Tokenizer,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            chunk_size_limit: 2500,
            chunk_overlap: 128,
            tokenizer: Tokenizer::UnicodeWord,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.chunk_size_limit == 0 || self.chunk_overlap >= self.chunk_size_limit {
            return Err(CorpusError::InvalidConfig(format!(
                "need 0 <= chunk_overlap ({}) < chunk_size_limit ({})",
                self.chunk_overlap, self.chunk_size_limit
            )));
        }
        Ok(())
    }
}

/// Normalizes whitespace and drops consecutive duplicate lines and sections.
///
/// Sections are blocks separated by blank lines; the output separates them
/// with exactly one blank line.
pub fn preprocess_note(raw: &str) -> Result<String, CorpusError> {
    let mut sections: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for line in raw.lines() {
        let normalized = line.split_whitespace().collect::<Vec<_>>().join(" ");
        if normalized.is_empty() {
            if !current.is_empty() {
                sections.push(std::mem::take(&mut current));
            }
        } else {
            current.push(normalized);
        }
    }
    if !current.is_empty() {
        sections.push(current);
    }
    for section in &mut sections {
        section.dedup();
    }
    sections.dedup();
    if sections.is_empty() {
        return Err(CorpusError::EmptyNote);
    }
    Ok(sections
        .iter()
        .map(|s| s.join("\n"))
        .collect::<Vec<_>>()
        .join("\n\n"))
}

/// Byte spans of the tokens of `text`.
///
/// `UnicodeWord` yields maximal alphanumeric runs plus every other
/// non-whitespace character as its own token. Both tokenizers only look at
/// character classes, so tokenizing a slice that starts on a token boundary
/// yields the same tokens as the full text.
pub fn token_spans(text: &str, tokenizer: Tokenizer) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let is_word = |c: char| match tokenizer {
        Tokenizer::Whitespace => !c.is_whitespace(),
        Tokenizer::UnicodeWord => c.is_alphanumeric() || c == '_',
    };
    for (i, c) in text.char_indices() {
        if is_word(c) {
            if start.is_none() {
                start = Some(i);
            }
            continue;
        }
        if let Some(s) = start.take() {
            spans.push((s, i));
        }
        if tokenizer == Tokenizer::UnicodeWord && !c.is_whitespace() {
            spans.push((i, i + c.len_utf8()));
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

pub fn tokenize(text: &str, tokenizer: Tokenizer) -> Vec<&str> {
    token_spans(text, tokenizer)
        .into_iter()
        .map(|(s, e)| &text[s..e])
        .collect()
}

pub fn token_count(text: &str, tokenizer: Tokenizer) -> usize {
    token_spans(text, tokenizer).len()
}

fn ends_sentence(text: &str, spans: &[(usize, usize)], idx: usize) -> bool {
    let (s, e) = spans[idx];
    if matches!(&text[s..e], "." | "!" | "?") {
        return true;
    }
    match spans.get(idx + 1) {
        Some(&(next, _)) => text[e..next].contains('\n'),
        None => true,
    }
}

/// Splits a preprocessed note into token-bounded chunks.
///
/// A note within the limit is a single chunk. Otherwise each window of at
/// most `chunk_size_limit` tokens is cut at the last sentence or line end in
/// its second half when there is one, and the next window starts
/// `chunk_overlap` tokens before the cut.
pub fn chunk_note(note: &ClinicalNote, cfg: &CorpusConfig) -> Result<Vec<Chunk>, CorpusError> {
    cfg.validate()?;
    let text = note.text.as_str();
    let spans = token_spans(text, cfg.tokenizer);
    let n = spans.len();
    let limit = cfg.chunk_size_limit;
    let overlap = cfg.chunk_overlap;

    let mut chunks = Vec::new();
    let mut start = 0usize;
    loop {
        let end = if n - start <= limit {
            n
        } else {
            let hard = start + limit;
            let floor = (start + overlap + 1).max(start + limit / 2);
            (floor..=hard)
                .rev()
                .find(|&e| ends_sentence(text, &spans, e - 1))
                .unwrap_or(hard)
        };
        let byte_start = if start == 0 { 0 } else { spans[start].0 };
        let byte_end = if end == n { text.len() } else { spans[end].0 };
        chunks.push(Chunk {
            note_id: note.note_id.clone(),
            chunk_index: chunks.len(),
            text: text[byte_start..byte_end].to_string(),
            token_count: end - start,
            byte_start,
            byte_end,
        });
        if end == n {
            break;
        }
        start = end - overlap;
    }
    Ok(chunks)
}

/// Reads a JSONL corpus. Under `lenient`, invalid lines are logged and
/// returned alongside the parsed notes; otherwise any invalid line is fatal.
pub fn read_corpus<R: BufRead>(
    reader: R,
    lenient: bool,
) -> Result<(Vec<ClinicalNote>, Vec<LineError>), CorpusError> {
    let mut notes = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<ClinicalNote>(&line)
            .map_err(|e| e.to_string())
            .and_then(|note| {
                if note.text.trim().is_empty() {
                    Err("text is empty".to_string())
                } else if !seen.insert(note.note_id.clone()) {
                    Err(format!("duplicate note_id {}", note.note_id))
                } else {
                    Ok(note)
                }
            });
        match parsed {
            Ok(note) => notes.push(note),
            Err(reason) => {
                log::warn!("corpus line {line_no}: {reason}");
                errors.push(LineError { line: line_no, reason });
            }
        }
    }
    if !errors.is_empty() && !lenient {
        return Err(CorpusError::InvalidLines(errors));
    }
    Ok((notes, errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn note(text: &str) -> ClinicalNote {
        ClinicalNote {
            patient_id: "p1".into(),
            note_id: "n1".into(),
            note_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            note_type: NoteType::Progress,
            text: text.into(),
        }
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn consecutive_duplicate_lines_removed() {
        assert_eq!(preprocess_note("Line A\nLine A\nLine B").unwrap(), "Line A\nLine B");
    }

    #[test]
    fn whitespace_normalized() {
        assert_eq!(preprocess_note("  a  b  ").unwrap(), "a b");
    }

    #[test]
    fn repeated_section_dropped() {
        let raw = "HPI:\nPatient doing well.\n\nHPI:\nPatient doing well.\n\n\nPlan:\nContinue.";
        let out = preprocess_note(raw).unwrap();
        assert_eq!(out, "HPI:\nPatient doing well.\n\nPlan:\nContinue.");
        assert_eq!(out.split("\n\n").count(), 2);
    }

    #[test]
    fn whitespace_only_is_empty_note() {
        assert!(matches!(preprocess_note(" \n\t \n"), Err(CorpusError::EmptyNote)));
    }

    #[test]
    fn tokenize_basics() {
        assert!(tokenize("", Tokenizer::Whitespace).is_empty());
        assert_eq!(tokenize("T2 N0 M0", Tokenizer::Whitespace), vec!["T2", "N0", "M0"]);
        assert_eq!(
            tokenize("ER: positive.", Tokenizer::UnicodeWord),
            vec!["ER", ":", "positive", "."]
        );
    }

    #[test]
    fn whitespace_count_matches_independent_word_counter() {
        let para = "Patient is a 54-year-old female with invasive ductal carcinoma of the left breast,\n\
                    ER positive, PR negative, HER2 negative. ECOG 1.  Plan: continue docetaxel.";
        // independent counter: words separated by ASCII spaces/newlines, as `wc -w` does
        let mut wc = 0;
        let mut in_word = false;
        for b in para.bytes() {
            let ws = matches!(b, b' ' | b'\n' | b'\t');
            if !ws && !in_word {
                wc += 1;
            }
            in_word = !ws;
        }
        assert_eq!(token_count(para, Tokenizer::Whitespace), wc);
        // `wc -w` on the same text reports 24
        assert_eq!(wc, 24);
    }

    #[test]
    fn short_note_single_chunk() {
        let chunks = chunk_note(&note(&words(100)), &CorpusConfig::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_count, 100);
    }

    #[test]
    fn arithmetic_partition_without_overlap() {
        let cfg = CorpusConfig { chunk_size_limit: 4, chunk_overlap: 0, tokenizer: Tokenizer::Whitespace };
        let chunks = chunk_note(&note(&words(10)), &cfg).unwrap();
        let sizes: Vec<_> = chunks.iter().map(|c| c.token_count).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn chunk_count_matches_closed_form() {
        let n = 6000usize;
        let cfg = CorpusConfig::default();
        let chunks = chunk_note(&note(&words(n)), &cfg).unwrap();
        let (l, o) = (cfg.chunk_size_limit, cfg.chunk_overlap);
        let expected = (n - o).div_ceil(l - o);
        assert_eq!(chunks.len(), expected);
        assert_eq!(expected, 3);
        for w in chunks.windows(2) {
            let prev = tokenize(&w[0].text, cfg.tokenizer);
            let next = tokenize(&w[1].text, cfg.tokenizer);
            assert_eq!(&prev[prev.len() - o..], &next[..o]);
        }
    }

    #[test]
    fn prefers_sentence_boundaries() {
        let text = "a b c d e f. g h i j k l m n";
        let cfg = CorpusConfig { chunk_size_limit: 10, chunk_overlap: 0, tokenizer: Tokenizer::UnicodeWord };
        let chunks = chunk_note(&note(text), &cfg).unwrap();
        assert_eq!(chunks[0].text, "a b c d e f. ");
        assert_eq!(chunks[0].token_count, 7);
    }

    #[test]
    fn corpus_reader_strict_and_lenient() {
        let good = r#"{"patient_id":"p","note_id":"a","note_date":"2020-01-02","note_type":"admission","text":"x"}"#;
        let bad = r#"{"patient_id":"p","note_id":"b","note_date":"2020-01-02","note_type":"admission","text":"x","extra":1}"#;
        let input = format!("{good}\n{bad}\n");
        let err = read_corpus(input.as_bytes(), false).unwrap_err();
        assert!(matches!(err, CorpusError::InvalidLines(ref v) if v[0].line == 2));
        let (notes, errs) = read_corpus(input.as_bytes(), true).unwrap();
        assert_eq!(notes.len(), 1);
        assert_eq!(errs[0].line, 2);
    }

    #[test]
    fn duplicate_note_ids_rejected() {
        let l = r#"{"patient_id":"p","note_id":"a","note_date":"2020-01-02","note_type":"other","text":"x"}"#;
        let (notes, errs) = read_corpus(format!("{l}\n{l}").as_bytes(), true).unwrap();
        assert_eq!(notes.len(), 1);
        assert!(errs[0].reason.contains("duplicate"));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                "[a-zA-Z0-9]{1,8}".prop_map(|s| s),
                Just(". ".to_string()),
                Just("\n".to_string()),
                Just(" ".to_string()),
                Just(", ".to_string()),
                Just("\n\n".to_string()),
            ],
            0..400,
        )
        .prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn preprocess_idempotent(raw in arb_text()) {
            if let Ok(once) = preprocess_note(&raw) {
                prop_assert_eq!(preprocess_note(&once).unwrap(), once);
            }
        }

        #[test]
        fn token_count_monotone_under_concatenation(a in arb_text(), b in arb_text()) {
            let joined = format!("{a}{b}");
            for t in [Tokenizer::Whitespace, Tokenizer::UnicodeWord] {
                prop_assert!(token_count(&joined, t) >= token_count(&a, t));
            }
        }

        #[test]
        fn chunks_bounded_and_reconstruct(raw in arb_text(), limit in 2usize..40, overlap_frac in 0.0f64..0.9) {
            let Ok(text) = preprocess_note(&raw) else { return Ok(()); };
            let overlap = ((limit as f64) * overlap_frac) as usize;
            let cfg = CorpusConfig { chunk_size_limit: limit, chunk_overlap: overlap, tokenizer: Tokenizer::UnicodeWord };
            let n = note(&text);
            let chunks = chunk_note(&n, &cfg).unwrap();
            let again = chunk_note(&n, &cfg).unwrap();
            prop_assert_eq!(&chunks, &again);
            let mut rebuilt = String::new();
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.chunk_index, i);
                prop_assert!(c.token_count <= limit);
                prop_assert_eq!(token_count(&c.text, cfg.tokenizer), c.token_count);
                let skip = if i == 0 { 0 } else { chunks[i - 1].byte_end - c.byte_start };
                rebuilt.push_str(&c.text[skip..]);
            }
            prop_assert_eq!(&rebuilt, &text);
            if overlap == 0 {
                prop_assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), text);
            }
        }
    }
}

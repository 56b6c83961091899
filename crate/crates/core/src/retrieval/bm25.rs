//! Okapi BM25 over the chunk set of a single note.
//!
//! score(D, Q) = sum_q idf(q) * tf(q, D) * (k1 + 1) / (tf(q, D) + k1 * (1 - b + b * |D| / avgdl))
//! idf(q)      = ln((N - n_q + 0.5) / (n_q + 0.5) + 1)
//!
//! The +1 inside the logarithm keeps idf non-negative even when a term
//! occurs in every chunk of a small per-note corpus.

use std::collections::HashMap;

use crate::corpus::{tokenize, Chunk, Tokenizer};

use super::RetrievalConfig;

/// Lowercased alphanumeric terms; punctuation tokens are not indexed.
pub fn terms(text: &str, tokenizer: Tokenizer) -> Vec<String> {
    tokenize(text, tokenizer)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocTerms {
    pub freqs: HashMap<String, u32>,
    pub len: usize,
}

impl DocTerms {
    pub fn from_terms(terms: &[String]) -> Self {
        let mut freqs = HashMap::new();
        for t in terms {
            *freqs.entry(t.clone()).or_insert(0) += 1;
        }
        DocTerms { freqs, len: terms.len() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub doc_freq: HashMap<String, usize>,
    pub avgdl: f64,
}

impl CorpusStats {
    pub fn from_docs<'a>(docs: impl IntoIterator<Item = &'a DocTerms>) -> Self {
        let mut n_docs = 0;
        let mut total = 0usize;
        let mut doc_freq = HashMap::new();
        for d in docs {
            n_docs += 1;
            total += d.len;
            for t in d.freqs.keys() {
                *doc_freq.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let avgdl = if n_docs == 0 { 0.0 } else { total as f64 / n_docs as f64 };
        CorpusStats { n_docs, doc_freq, avgdl }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs as f64;
        let nq = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((n - nq + 0.5) / (nq + 0.5) + 1.0).ln()
    }
}

pub fn score_doc(query: &[String], doc: &DocTerms, stats: &CorpusStats, cfg: &RetrievalConfig) -> f64 {
    if stats.avgdl <= 0.0 {
        return 0.0;
    }
    let (k1, b) = (cfg.bm25_k1, cfg.bm25_b);
    let norm = k1 * (1.0 - b + b * doc.len as f64 / stats.avgdl);
    query
        .iter()
        .map(|q| match doc.freqs.get(q) {
            Some(&tf) => {
                let tf = tf as f64;
                stats.idf(q) * tf * (k1 + 1.0) / (tf + norm)
            }
            None => 0.0,
        })
        .sum()
}

/// BM25 of one chunk against pre-tokenized query terms.
pub fn bm25_score(
    query: &[String],
    chunk: &Chunk,
    stats: &CorpusStats,
    cfg: &RetrievalConfig,
    tokenizer: Tokenizer,
) -> f64 {
    let doc = DocTerms::from_terms(&terms(&chunk.text, tokenizer));
    score_doc(query, &doc, stats, cfg)
}

/// Term statistics for a chunk set, built once per note.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    pub docs: Vec<DocTerms>,
    pub stats: CorpusStats,
}

impl Bm25Index {
    pub fn build(chunks: &[Chunk], tokenizer: Tokenizer) -> Self {
        let docs: Vec<DocTerms> = chunks
            .iter()
            .map(|c| DocTerms::from_terms(&terms(&c.text, tokenizer)))
            .collect();
        let stats = CorpusStats::from_docs(&docs);
        Bm25Index { docs, stats }
    }

    pub fn scores(&self, query: &[String], cfg: &RetrievalConfig) -> Vec<f64> {
        self.docs.iter().map(|d| score_doc(query, d, &self.stats, cfg)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chunk(i: usize, text: &str) -> Chunk {
        Chunk {
            note_id: "n".into(),
            chunk_index: i,
            text: text.into(),
            token_count: 1,
            byte_start: 0,
            byte_end: text.len(),
        }
    }

    fn q(s: &str) -> Vec<String> {
        terms(s, Tokenizer::UnicodeWord)
    }

    #[test]
    fn absent_term_contributes_nothing() {
        let idx = Bm25Index::build(&[chunk(0, "alpha beta"), chunk(1, "gamma")], Tokenizer::UnicodeWord);
        let cfg = RetrievalConfig::default();
        assert_eq!(score_doc(&q("delta"), &idx.docs[0], &idx.stats, &cfg), 0.0);
        let with = score_doc(&q("alpha delta"), &idx.docs[0], &idx.stats, &cfg);
        let without = score_doc(&q("alpha"), &idx.docs[0], &idx.stats, &cfg);
        assert_eq!(with, without);
    }

    #[test]
    fn single_doc_single_occurrence() {
        // N=1, n_q=1: idf = ln(0.5/1.5 + 1) = ln(4/3); |d| = avgdl and tf = 1 give a unit tf part
        let c = chunk(0, "relapse");
        let idx = Bm25Index::build(std::slice::from_ref(&c), Tokenizer::UnicodeWord);
        let s = bm25_score(&q("relapse"), &c, &idx.stats, &RetrievalConfig::default(), Tokenizer::UnicodeWord);
        assert!((s - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((s - 0.2877).abs() < 1e-4);
    }

    #[test]
    fn both_terms_outrank_one() {
        let chunks = [
            chunk(0, "tumor board met today, margins clear"),
            chunk(1, "receptor testing pending for the tumor"),
            chunk(2, "estrogen receptor strongly expressed"),
        ];
        let idx = Bm25Index::build(&chunks, Tokenizer::UnicodeWord);
        let s = idx.scores(&q("estrogen receptor"), &RetrievalConfig::default());
        assert!(s[2] > s[1] && s[1] > s[0]);
        assert_eq!(s[0], 0.0);
    }

    proptest! {
        #[test]
        fn idf_non_negative(n in 1usize..50, frac in 0.0f64..=1.0) {
            let nq = ((n as f64) * frac) as usize;
            let mut doc_freq = HashMap::new();
            doc_freq.insert("t".to_string(), nq);
            let stats = CorpusStats { n_docs: n, doc_freq, avgdl: 10.0 };
            prop_assert!(stats.idf("t") >= 0.0);
        }

        #[test]
        fn extra_occurrence_never_lowers_score(tf in 0u32..20, len in 20usize..60, df in 1usize..10) {
            // fixed document length: one filler token is replaced by the query term
            let cfg = RetrievalConfig::default();
            let mut doc_freq = HashMap::new();
            doc_freq.insert("needle".to_string(), df);
            let stats = CorpusStats { n_docs: 10, doc_freq, avgdl: 40.0 };
            let mk = |tf: u32| {
                let mut freqs = HashMap::new();
                if tf > 0 { freqs.insert("needle".to_string(), tf); }
                DocTerms { freqs, len }
            };
            let query = vec!["needle".to_string()];
            prop_assert!(score_doc(&query, &mk(tf + 1), &stats, &cfg) >= score_doc(&query, &mk(tf), &stats, &cfg));
        }
    }
}

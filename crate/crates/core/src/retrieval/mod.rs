//! Hybrid lexical + semantic chunk retrieval.
//!
//! Candidates are the union of the BM25 top-k and the cosine top-k; the
//! union is presented in reciprocal-rank-fusion order.

pub mod bm25;
pub mod embed;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chunk, Tokenizer};

pub use bm25::{bm25_score, Bm25Index, CorpusStats};
pub use embed::{EmbedError, EmbeddingProvider, EmbeddingVector, HashedBowEmbedder, HttpEmbedder, HttpEmbedderConfig};

/// Rank offset used by reciprocal-rank fusion.
pub const RRF_K: f64 = 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,
    #[error("no chunks to retrieve from")]
    EmptyChunks,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("embedding failed for chunk {chunk_id}: {source}")]
    EmbeddingFailure { chunk_id: String, source: EmbedError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    #[default]
    Union,
    Rrf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub k: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub fusion: Fusion,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { k: 10, bm25_k1: 1.2, bm25_b: 0.75, fusion: Fusion::Union }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 {
            return Err(RetrievalError::InvalidConfig("k must be >= 1".into()));
        }
        if !(self.bm25_k1 > 0.0) {
            return Err(RetrievalError::InvalidConfig("bm25_k1 must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.bm25_b) {
            return Err(RetrievalError::InvalidConfig("bm25_b must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Lexical,
    Semantic,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub bm25_score: f64,
    pub cosine_score: f64,
    pub fusion_score: f64,
    pub source: Source,
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dim() != b.dim() {
        return Err(RetrievalError::DimensionMismatch(a.dim(), b.dim()));
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    let na = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Indices sorted by descending score, ties by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx
}

fn embed_chunks(chunks: &[Chunk], embedder: &dyn EmbeddingProvider) -> Result<Vec<EmbeddingVector>, RetrievalError> {
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    match embedder.embed_batch(&texts) {
        Ok(v) => Ok(v),
        // retry one by one so the failing chunk can be named
        Err(_) => chunks
            .iter()
            .map(|c| {
                embedder.embed(&c.text).map_err(|source| RetrievalError::EmbeddingFailure {
                    chunk_id: format!("{}#{}", c.note_id, c.chunk_index),
                    source,
                })
            })
            .collect(),
    }
}

pub fn retrieve_top_k(
    query: &str,
    chunks: &[Chunk],
    embedder: &dyn EmbeddingProvider,
    cfg: &RetrievalConfig,
    tokenizer: Tokenizer,
) -> Result<Vec<ScoredChunk>, RetrievalError> {
    cfg.validate()?;
    if chunks.is_empty() {
        return Err(RetrievalError::EmptyChunks);
    }
    let index = Bm25Index::build(chunks, tokenizer);
    let lexical = index.scores(&bm25::terms(query, tokenizer), cfg);

    let query_vec = embedder.embed(query).map_err(|source| RetrievalError::EmbeddingFailure {
        chunk_id: "<query>".into(),
        source,
    })?;
    let semantic = embed_chunks(chunks, embedder)?
        .iter()
        .map(|v| cosine_similarity(&query_vec, v))
        .collect::<Result<Vec<f64>, _>>()?;

    let lex_rank = ranking(&lexical);
    let sem_rank = ranking(&semantic);
    let n = chunks.len();
    let mut rank_of = vec![(0usize, 0usize); n];
    for (r, &i) in lex_rank.iter().enumerate() {
        rank_of[i].0 = r + 1;
    }
    for (r, &i) in sem_rank.iter().enumerate() {
        rank_of[i].1 = r + 1;
    }
    let fused: Vec<f64> = rank_of
        .iter()
        .map(|&(l, s)| 1.0 / (RRF_K + l as f64) + 1.0 / (RRF_K + s as f64))
        .collect();

    let k = cfg.k.min(n);
    let in_lex = |i: usize| rank_of[i].0 <= k;
    let in_sem = |i: usize| rank_of[i].1 <= k;
    let selected: Vec<usize> = match cfg.fusion {
        Fusion::Union => ranking(&fused).into_iter().filter(|&i| in_lex(i) || in_sem(i)).collect(),
        Fusion::Rrf => ranking(&fused).into_iter().take(k).collect(),
    };

    Ok(selected
        .into_iter()
        .map(|i| ScoredChunk {
            chunk: chunks[i].clone(),
            bm25_score: lexical[i],
            cosine_score: semantic[i],
            fusion_score: fused[i],
            source: match (in_lex(i), in_sem(i)) {
                (true, true) => Source::Both,
                (true, false) => Source::Lexical,
                (false, true) => Source::Semantic,
                (false, false) if rank_of[i].0 <= rank_of[i].1 => Source::Lexical,
                (false, false) => Source::Semantic,
            },
        })
        .collect())
}

/// Retrieves for several queries and merges the results, keeping each
/// chunk's best fusion score. Output is ordered by that score.
pub fn retrieve_for_queries(
    queries: &[String],
    chunks: &[Chunk],
    embedder: &dyn EmbeddingProvider,
    cfg: &RetrievalConfig,
    tokenizer: Tokenizer,
) -> Result<Vec<ScoredChunk>, RetrievalError> {
    let mut best: BTreeMap<usize, ScoredChunk> = BTreeMap::new();
    for q in queries {
        for sc in retrieve_top_k(q, chunks, embedder, cfg, tokenizer)? {
            let entry = best.entry(sc.chunk.chunk_index);
            match entry {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(sc);
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    let cur = o.get_mut();
                    if sc.fusion_score > cur.fusion_score {
                        let source = merge_source(cur.source, sc.source);
                        *cur = ScoredChunk { source, ..sc };
                    } else {
                        cur.source = merge_source(cur.source, sc.source);
                    }
                }
            }
        }
    }
    let mut out: Vec<ScoredChunk> = best.into_values().collect();
    out.sort_by(|a, b| {
        b.fusion_score
            .partial_cmp(&a.fusion_score)
            .unwrap_or(Ordering::Equal)
            .then(a.chunk.chunk_index.cmp(&b.chunk.chunk_index))
    });
    Ok(out)
}

fn merge_source(a: Source, b: Source) -> Source {
    if a == b {
        a
    } else {
        Source::Both
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

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_basics() {
        let a = v(&[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        // 32 / (sqrt(14) * sqrt(77))
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        assert!((cosine_similarity(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.974_631_846).abs() < 1e-9);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(RetrievalError::DimensionMismatch(1, 2))
        );
        assert_eq!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])), Err(RetrievalError::ZeroVector));
    }

    #[test]
    fn single_chunk_is_returned() {
        let out = retrieve_top_k(
            "stage",
            &[chunk(0, "nothing relevant")],
            &HashedBowEmbedder::default(),
            &RetrievalConfig::default(),
            Tokenizer::UnicodeWord,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn empty_chunk_list_errors() {
        let r = retrieve_top_k("x", &[], &HashedBowEmbedder::default(), &RetrievalConfig::default(), Tokenizer::UnicodeWord);
        assert_eq!(r, Err(RetrievalError::EmptyChunks));
    }

    struct Failing;
    impl EmbeddingProvider for Failing {
        fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
            if text.contains("bad") {
                Err(EmbedError::Malformed("boom".into()))
            } else {
                HashedBowEmbedder::default().embed(text)
            }
        }
    }

    #[test]
    fn embedding_failure_names_chunk() {
        let chunks = [chunk(0, "fine text"), chunk(1, "bad text")];
        let err = retrieve_top_k("text", &chunks, &Failing, &RetrievalConfig::default(), Tokenizer::UnicodeWord).unwrap_err();
        assert!(matches!(err, RetrievalError::EmbeddingFailure { ref chunk_id, .. } if chunk_id == "n#1"));
    }

    fn synthetic_chunks(n: usize, seed: u64) -> Vec<Chunk> {
        use rand::{Rng, SeedableRng};
        let vocab = [
            "patient", "chemo", "stage", "tumor", "receptor", "nodes", "grade", "dose", "cycle", "scan", "labs",
            "fatigue", "nausea", "estrogen", "status", "plan",
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let len = rng.random_range(5..40);
                let words: Vec<&str> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())]).collect();
                chunk(i, &words.join(" "))
            })
            .collect()
    }

    #[test]
    fn union_contains_lexical_top_k() {
        let chunks = synthetic_chunks(30, 7);
        let cfg = RetrievalConfig::default();
        let out = retrieve_top_k("estrogen receptor status", &chunks, &HashedBowEmbedder::default(), &cfg, Tokenizer::UnicodeWord).unwrap();
        assert!(out.len() <= 20 && out.len() >= 10);
        let idx = Bm25Index::build(&chunks, Tokenizer::UnicodeWord);
        let scores = idx.scores(&bm25::terms("estrogen receptor status", Tokenizer::UnicodeWord), &cfg);
        for &i in ranking(&scores).iter().take(10) {
            assert!(out.iter().any(|s| s.chunk.chunk_index == i), "lexical top-10 chunk {i} missing");
        }
    }

    #[test]
    fn rrf_mode_returns_exactly_k() {
        let chunks = synthetic_chunks(30, 3);
        let cfg = RetrievalConfig { fusion: Fusion::Rrf, ..Default::default() };
        let out = retrieve_top_k("tumor grade", &chunks, &HashedBowEmbedder::default(), &cfg, Tokenizer::UnicodeWord).unwrap();
        assert_eq!(out.len(), 10);
    }

    proptest! {
        #[test]
        fn cardinality_bounds_and_rank_safety(n in 1usize..40, k in 1usize..15, seed in 0u64..1000) {
            let chunks = synthetic_chunks(n, seed);
            let cfg = RetrievalConfig { k, ..Default::default() };
            let query = "stage tumor receptor";
            let out = retrieve_top_k(query, &chunks, &HashedBowEmbedder::default(), &cfg, Tokenizer::UnicodeWord).unwrap();
            if k <= n {
                prop_assert!(out.len() >= k && out.len() <= 2 * k);
            } else {
                prop_assert_eq!(out.len(), n);
            }
            let idx = Bm25Index::build(&chunks, Tokenizer::UnicodeWord);
            let top1 = ranking(&idx.scores(&bm25::terms(query, Tokenizer::UnicodeWord), &cfg))[0];
            prop_assert!(out.iter().any(|s| s.chunk.chunk_index == top1));
            for s in &out {
                prop_assert!((-1.0..=1.0).contains(&s.cosine_score));
                prop_assert!(s.bm25_score >= 0.0);
            }
        }
    }
}

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Tokenizer;
use crate::http::{JsonClient, RetryExhausted, RetryPolicy};

use super::bm25::terms;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding has non-finite components")]
    NonFinite,
    #[error("embedding dimension {got} differs from provider dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("embedding request failed: {0}")]
    Http(#[from] RetryExhausted),
    #[error("embedding response malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::Malformed("zero-length embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Deterministic hashed bag-of-words embedding, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedBowEmbedder {
    dim: usize,
    tokenizer: Tokenizer,
}

impl HashedBowEmbedder {
    pub fn new(dim: usize) -> Self {
        HashedBowEmbedder { dim: dim.max(1), tokenizer: Tokenizer::UnicodeWord }
    }

    fn bucket(&self, term: &str) -> usize {
        let digest = Sha256::digest(term.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(head) % self.dim as u64) as usize
    }
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        HashedBowEmbedder::new(256)
    }
}

impl EmbeddingProvider for HashedBowEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let terms = terms(text, self.tokenizer);
        if terms.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut v = vec![0.0; self.dim];
        for t in &terms {
            v[self.bucket(t)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        EmbeddingVector::new(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub max_in_flight: usize,
    pub batch_size: usize,
    pub retry: RetryPolicy,
}

impl Default for HttpEmbedderConfig {
    fn default() -> Self {
        HttpEmbedderConfig {
            endpoint: "http://localhost:11434/v1/embeddings".into(),
            model: "mxbai-embed-large".into(),
            api_key_env: Some("ONCOSURV_EMBED_API_KEY".into()),
            max_in_flight: 4,
            batch_size: 32,
            retry: RetryPolicy::default(),
        }
    }
}

/// Client for an OpenAI-style embeddings endpoint:
/// `{model, input: [..]}` -> `{data: [{embedding: [..]}, ..]}`.
#[derive(Debug)]
pub struct HttpEmbedder {
    client: JsonClient,
    model: String,
    batch_size: usize,
    dim: OnceLock<usize>,
}

impl HttpEmbedder {
    pub fn new(cfg: &HttpEmbedderConfig) -> Result<Self, EmbedError> {
        let token = cfg.api_key_env.as_deref().and_then(|k| std::env::var(k).ok());
        let client = JsonClient::new(&cfg.endpoint, token, cfg.retry.clone(), cfg.max_in_flight)
            .map_err(|e| EmbedError::Malformed(e.to_string()))?;
        Ok(HttpEmbedder {
            client,
            model: cfg.model.clone(),
            batch_size: cfg.batch_size.max(1),
            dim: OnceLock::new(),
        })
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let resp = self.client.post(&json!({ "model": self.model, "input": texts }))?;
        let data = resp
            .get("data")
            .and_then(|d| d.as_array())
            .ok_or_else(|| EmbedError::Malformed("missing `data` array".into()))?;
        if data.len() != texts.len() {
            return Err(EmbedError::Malformed(format!(
                "{} embeddings for {} inputs",
                data.len(),
                texts.len()
            )));
        }
        data.iter()
            .map(|item| {
                let values: Vec<f64> = item
                    .get("embedding")
                    .and_then(|e| e.as_array())
                    .ok_or_else(|| EmbedError::Malformed("missing `embedding`".into()))?
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| EmbedError::Malformed("non-numeric component".into())))
                    .collect::<Result<_, _>>()?;
                let v = EmbeddingVector::new(values)?;
                let expected = *self.dim.get_or_init(|| v.dim());
                if v.dim() != expected {
                    return Err(EmbedError::Dimension { expected, got: v.dim() });
                }
                Ok(v)
            })
            .collect()
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        Ok(self.request(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            out.extend(self.request(batch)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testing;
    use crate::retrieval::cosine_similarity;

    #[test]
    fn hashed_bow_is_deterministic_and_normalized() {
        let e = HashedBowEmbedder::default();
        let a = e.embed("ER positive, PR negative").unwrap();
        assert_eq!(a, e.embed("ER positive, PR negative").unwrap());
        let norm: f64 = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_text_is_closer() {
        let e = HashedBowEmbedder::default();
        let base = e.embed("er positive").unwrap();
        let near = cosine_similarity(&base, &e.embed("er positive margin").unwrap()).unwrap();
        let far = cosine_similarity(&base, &e.embed("creatinine level").unwrap()).unwrap();
        // without bucket collisions: 2 / sqrt(2 * 3) and 0
        assert!((near - 2.0 / 6f64.sqrt()).abs() < 1e-12);
        assert!(near > far);
    }

    #[test]
    fn empty_text_is_an_error() {
        assert_eq!(HashedBowEmbedder::default().embed(""), Err(EmbedError::EmptyText));
        assert_eq!(HashedBowEmbedder::default().embed(" .,; "), Err(EmbedError::EmptyText));
    }

    #[test]
    fn http_embedder_round_trip() {
        let stub = testing::serve(vec![(200, r#"{"data":[{"embedding":[0.5,0.25]},{"embedding":[1,0]}]}"#.into())]);
        let cfg = HttpEmbedderConfig { endpoint: stub.url.clone(), api_key_env: None, ..Default::default() };
        let e = HttpEmbedder::new(&cfg).unwrap();
        let out = e.embed_batch(&["a", "b"]).unwrap();
        assert_eq!(out[0].values(), &[0.5, 0.25]);
        let sent: serde_json::Value = serde_json::from_str(&stub.bodies.lock().unwrap()[0]).unwrap();
        assert_eq!(sent, json!({"model": "mxbai-embed-large", "input": ["a", "b"]}));
    }

    #[test]
    fn http_embedder_rejects_dimension_drift() {
        let stub = testing::serve(vec![(200, r#"{"data":[{"embedding":[1,0]},{"embedding":[1,0,0]}]}"#.into())]);
        let cfg = HttpEmbedderConfig { endpoint: stub.url.clone(), api_key_env: None, ..Default::default() };
        let e = HttpEmbedder::new(&cfg).unwrap();
        assert!(matches!(e.embed_batch(&["a", "b"]), Err(EmbedError::Dimension { expected: 2, got: 3 })));
    }
}

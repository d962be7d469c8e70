//! Unit-norm text embeddings.
//!
//! The built-in embedder counts lowercased character 3-, 4- and 5-grams,
//! hashes each n-gram's UTF-8 bytes with 64-bit FNV-1a into `dimension`
//! buckets (`hash % dimension`), and L2-normalizes the term-frequency vector.

use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;

use super::MetricsError;
use crate::hash::fnv1a64;

pub const DEFAULT_DIMENSION: usize = 256;

const NGRAM_SIZES: std::ops::RangeInclusive<usize> = 3..=5;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Scales `raw` to unit length; rejects zero (and non-finite) vectors.
    pub fn normalized(mut raw: Vec<f64>) -> Result<Self, MetricsError> {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(MetricsError::ZeroVector);
        }
        raw.iter_mut().for_each(|x| *x /= norm);
        Ok(Self { values: raw })
    }

    /// Wraps values that are already unit norm (within 1e-6).
    pub fn from_unit(values: Vec<f64>) -> Result<Self, MetricsError> {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(MetricsError::NotUnit(norm));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Cosine similarity, clamped to [-1, 1] against rounding.
    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        dot.clamp(-1.0, 1.0)
    }
}

#[async_trait]
pub trait Embedder: Send + Sync {
    async fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricsError>;

    /// Short description recorded in report provenance.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy)]
pub struct BuiltinEmbedder {
    pub dimension: usize,
}

impl Default for BuiltinEmbedder {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl BuiltinEmbedder {
    pub fn raw_counts(&self, text: &str) -> Vec<f64> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut counts = vec![0.0; self.dimension];
        let mut buf = String::new();
        for n in NGRAM_SIZES {
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window);
                let bucket = (fnv1a64(buf.as_bytes()) % self.dimension as u64) as usize;
                counts[bucket] += 1.0;
            }
        }
        counts
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, MetricsError> {
        if text.trim().is_empty() {
            return Err(MetricsError::EmptyText);
        }
        EmbeddingVector::normalized(self.raw_counts(text))
    }
}

#[async_trait]
impl Embedder for BuiltinEmbedder {
    async fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricsError> {
        self.embed_text(text)
    }

    fn describe(&self) -> String {
        format!("builtin char-ngram(3..5) fnv1a64 dim={}", self.dimension)
    }
}

/// Fetches vectors from an OpenAI-compatible embeddings endpoint
/// (`{"model", "input"}` → `data[0].embedding`).
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::Client,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    /// `api_key_env` names the variable holding the key; empty sends no key.
    pub fn new(endpoint_url: &str, model: &str, api_key_env: &str) -> Result<Self, MetricsError> {
        let api_key = if api_key_env.is_empty() {
            None
        } else {
            Some(std::env::var(api_key_env).map_err(|_| MetricsError::Remote(format!("{api_key_env} is not set")))?)
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| MetricsError::Remote(e.to_string()))?;
        Ok(Self {
            endpoint_url: endpoint_url.to_string(),
            model: model.to_string(),
            api_key,
            client,
        })
    }
}

#[async_trait]
impl Embedder for RemoteEmbedder {
    async fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricsError> {
        if text.trim().is_empty() {
            return Err(MetricsError::EmptyText);
        }
        let mut req = self
            .client
            .post(&self.endpoint_url)
            .json(&serde_json::json!({ "model": self.model, "input": text }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| MetricsError::Remote(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(MetricsError::Remote(format!("HTTP {status}")));
        }
        let body: EmbeddingResponse = resp.json().await.map_err(|e| MetricsError::Remote(e.to_string()))?;
        let raw = body
            .data
            .into_iter()
            .next()
            .ok_or_else(|| MetricsError::Remote("no embedding in response".into()))?
            .embedding;
        EmbeddingVector::normalized(raw)
    }

    fn describe(&self) -> String {
        format!("remote {} model={}", self.endpoint_url, self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn builtin_is_unit_and_deterministic() {
        let e = BuiltinEmbedder::default();
        for text in [fixtures::PORTAL_MESSAGE, fixtures::QA_FORUM_POST, "abc"] {
            let v = e.embed_text(text).unwrap();
            let norm = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
            assert_eq!(v.dimension(), 256);
            assert_eq!(v, e.embed_text(text).unwrap());
        }
    }

    #[test]
    fn abc_vs_abd() {
        // each text has exactly one 3-gram and nothing longer
        let e = BuiltinEmbedder::default();
        let b1 = (fnv1a64(b"abc") % 256) as usize;
        let b2 = (fnv1a64(b"abd") % 256) as usize;
        let expected = if b1 == b2 { 1.0 } else { 0.0 };
        let cos = e.embed_text("abc").unwrap().cosine(&e.embed_text("abd").unwrap());
        assert_eq!(cos, expected);
        assert!(cos < 1.0);
    }

    #[test]
    fn rejects_empty_and_zero() {
        let e = BuiltinEmbedder::default();
        assert!(matches!(e.embed_text("  "), Err(MetricsError::EmptyText)));
        // shorter than the smallest n-gram
        assert!(matches!(e.embed_text("hi"), Err(MetricsError::ZeroVector)));
        assert!(matches!(
            EmbeddingVector::normalized(vec![0.0, 0.0]),
            Err(MetricsError::ZeroVector)
        ));
        assert!(EmbeddingVector::from_unit(vec![1.0, 1.0]).is_err());
        assert!(EmbeddingVector::from_unit(vec![0.6, 0.8]).is_ok());
    }
}

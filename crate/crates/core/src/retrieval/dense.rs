use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{DemonstrationPool, RetrievalError, Scorer};
use crate::text::tokenize;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("expected {expected} vectors, got {got}")]
    Count { expected: usize, got: usize },
    #[error("expected dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
}

/// External text-embedding service.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError>;
}

fn check_vectors(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
) -> Result<Vec<Vec<f32>>, EmbeddingError> {
    let vectors = provider.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbeddingError::Count { expected: texts.len(), got: vectors.len() });
    }
    let dim = provider.dimension();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(EmbeddingError::Dimension { expected: dim, got: bad.len() });
    }
    Ok(vectors)
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, EmbeddingError> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity of the provider's embeddings of two texts.
pub fn dense_score(provider: &dyn EmbeddingProvider, query: &str, doc: &str) -> Result<f64, EmbeddingError> {
    let v = check_vectors(provider, &[query.to_string(), doc.to_string()])?;
    cosine(&v[0], &v[1])
}

/// Dense scorer; pool embeddings are computed once per pool and cached.
pub struct DenseScorer<'p> {
    provider: &'p dyn EmbeddingProvider,
    cache: RwLock<Option<(Vec<String>, Vec<Vec<f32>>)>>,
}

impl<'p> DenseScorer<'p> {
    pub fn new(provider: &'p dyn EmbeddingProvider) -> Self {
        DenseScorer { provider, cache: RwLock::new(None) }
    }
}

impl Scorer for DenseScorer<'_> {
    fn score_all(&self, pool: &DemonstrationPool, query: &str) -> Result<Vec<f64>, RetrievalError> {
        let ids: Vec<String> = pool.entries().iter().map(|d| d.id.clone()).collect();
        let cached = self
            .cache
            .read()
            .expect("dense cache poisoned")
            .as_ref()
            .filter(|(cached_ids, _)| *cached_ids == ids)
            .map(|(_, v)| v.clone());
        let doc_vectors = match cached {
            Some(v) => v,
            None => {
                let texts: Vec<String> = pool.entries().iter().map(|d| d.paragraph.clone()).collect();
                let v = check_vectors(self.provider, &texts)?;
                *self.cache.write().expect("dense cache poisoned") = Some((ids, v.clone()));
                v
            }
        };
        let q = check_vectors(self.provider, &[query.to_string()])?.remove(0);
        doc_vectors.iter().map(|d| cosine(&q, d).map_err(RetrievalError::from)).collect()
    }
}

/// Deterministic offline embedder: signed feature hashing of tokens.
///
/// Useful as a stand-in provider for tests and air-gapped runs; it captures
/// lexical overlap only.
#[derive(Clone, Debug)]
pub struct HashingEmbedder {
    pub dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        HashingEmbedder { dimension }
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        Ok(texts
            .iter()
            .map(|t| {
                let mut v = vec![0f32; self.dimension];
                for tok in tokenize(t) {
                    let h = Sha256::digest(tok.as_bytes());
                    let bucket = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) as usize % self.dimension;
                    v[bucket] += if h[8] & 1 == 0 { 1.0 } else { -1.0 };
                }
                v
            })
            .collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// HTTP provider: `POST {"texts": [...]}` → `{"vectors": [[...], ...]}`.
pub struct HttpEmbeddingProvider {
    pub endpoint: String,
    pub dimension: usize,
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let resp: EmbedResponse = ureq::post(&self.endpoint)
            .send_json(EmbedRequest { texts })
            .map_err(|e| EmbeddingError::Provider(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| EmbeddingError::Provider(e.to_string()))?;
        Ok(resp.vectors)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    struct Fixed(HashMap<&'static str, Vec<f32>>, usize);
    impl EmbeddingProvider for Fixed {
        fn dimension(&self) -> usize {
            self.1
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
            texts
                .iter()
                .map(|t| self.0.get(t.as_str()).cloned().ok_or_else(|| EmbeddingError::Provider(format!("no vector for {t}"))))
                .collect()
        }
    }

    fn mock() -> Fixed {
        Fixed(
            HashMap::from([
                ("x", vec![1.0, 0.0]),
                ("y", vec![0.0, 1.0]),
                ("diag", vec![1.0, 1.0]),
                ("zero", vec![0.0, 0.0]),
                ("bad", vec![1.0, 2.0, 3.0]),
            ]),
            2,
        )
    }

    #[test]
    fn cosine_cases() {
        let m = mock();
        assert_eq!(dense_score(&m, "x", "x").unwrap(), 1.0);
        assert_eq!(dense_score(&m, "x", "y").unwrap(), 0.0);
        assert!((dense_score(&m, "diag", "x").unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(dense_score(&m, "zero", "x"), Err(EmbeddingError::ZeroVector));
        assert_eq!(dense_score(&m, "bad", "x"), Err(EmbeddingError::Dimension { expected: 2, got: 3 }));
        assert!(matches!(dense_score(&m, "unknown", "x"), Err(EmbeddingError::Provider(_))));
    }

    #[test]
    fn hashing_embedder_identical_texts() {
        let e = HashingEmbedder::new(64);
        assert!((dense_score(&e, "zinc nitrate in DMF", "zinc nitrate in DMF").unwrap() - 1.0).abs() < 1e-12);
    }
}

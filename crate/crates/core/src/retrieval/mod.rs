//! Demonstration retrieval: pick the K gold examples most similar to a
//! query paragraph.
//!
//! Every scorer produces one score per pool entry; [`top_k`] sorts by score
//! descending with ties broken by ascending demonstration id, so rankings
//! are a total order and reproducible. The query's own paragraph can be
//! excluded by id (leave-one-out evaluation).

mod bm25;
mod dense;

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{bm25_score, Bm25Index, Bm25Params, Bm25Scorer};
pub use dense::{
    cosine, dense_score, DenseScorer, EmbeddingError, EmbeddingProvider, HashingEmbedder, HttpEmbeddingProvider,
};

use crate::curation::CurationState;
use crate::record::SynthesisRecord;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot build an index over an empty pool")]
    EmptyPool,
    #[error("unknown demonstration id `{0}`")]
    UnknownDoc(String),
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    Params { k1: f64, b: f64 },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Error, PartialEq)]
pub enum PoolError {
    #[error("duplicate demonstration id `{0}`")]
    DuplicateId(String),
    #[error("demonstration `{0}` is not finalized")]
    NotFinalized(String),
}

/// A paragraph paired with its curated gold conditions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub paragraph: String,
    pub gold: SynthesisRecord,
    pub curation_state: CurationState,
}

impl Demonstration {
    pub fn finalized(id: &str, paragraph: &str, gold: SynthesisRecord) -> Self {
        Demonstration {
            id: id.to_string(),
            paragraph: paragraph.to_string(),
            gold,
            curation_state: CurationState::Finalized,
        }
    }
}

/// The retrieval corpus. Only finalized demonstrations are admitted, also
/// when deserializing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PoolRepr")]
pub struct DemonstrationPool {
    entries: Vec<Demonstration>,
}

#[derive(Deserialize)]
struct PoolRepr {
    entries: Vec<Demonstration>,
}

impl TryFrom<PoolRepr> for DemonstrationPool {
    type Error = PoolError;

    fn try_from(r: PoolRepr) -> Result<Self, PoolError> {
        DemonstrationPool::new(r.entries)
    }
}

impl DemonstrationPool {
    pub fn new(entries: Vec<Demonstration>) -> Result<Self, PoolError> {
        let mut pool = DemonstrationPool::default();
        for e in entries {
            pool.push(e)?;
        }
        Ok(pool)
    }

    pub fn push(&mut self, demo: Demonstration) -> Result<(), PoolError> {
        if demo.curation_state != CurationState::Finalized {
            return Err(PoolError::NotFinalized(demo.id));
        }
        if self.get(&demo.id).is_some() {
            return Err(PoolError::DuplicateId(demo.id));
        }
        self.entries.push(demo);
        Ok(())
    }

    pub fn entries(&self) -> &[Demonstration] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Demonstration> {
        self.entries.iter().find(|d| d.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|d| d.id == id)
    }

    /// Sub-pool with the entries whose ids are in `ids`, in pool order.
    pub fn subset(&self, ids: &BTreeSet<String>) -> DemonstrationPool {
        DemonstrationPool { entries: self.entries.iter().filter(|d| ids.contains(&d.id)).cloned().collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalAlgo {
    Bm25,
    Dense,
    Random,
}

impl std::str::FromStr for RetrievalAlgo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bm25" => Ok(RetrievalAlgo::Bm25),
            "dense" => Ok(RetrievalAlgo::Dense),
            "random" => Ok(RetrievalAlgo::Random),
            other => Err(format!("unknown retrieval algorithm `{other}` (bm25|dense|random)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDemo {
    pub demo_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Scores a query against every pool entry, in pool order.
pub trait Scorer: Sync {
    fn score_all(&self, pool: &DemonstrationPool, query: &str) -> Result<Vec<f64>, RetrievalError>;
}

/// Top-K selection over a scorer, excluding `exclude` if given.
pub fn top_k(
    scorer: &dyn Scorer,
    pool: &DemonstrationPool,
    query: &str,
    k: usize,
    exclude: Option<&str>,
) -> Result<Vec<ScoredDemo>, RetrievalError> {
    if k == 0 || pool.is_empty() {
        return Ok(Vec::new());
    }
    let scores = scorer.score_all(pool, query)?;
    let mut scored: Vec<(&str, f64)> = pool
        .entries()
        .iter()
        .zip(scores)
        .filter(|(d, _)| Some(d.id.as_str()) != exclude)
        .map(|(d, s)| (d.id.as_str(), s))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (id, score))| ScoredDemo { demo_id: id.to_string(), score, rank: i + 1 })
        .collect())
}

/// Uniform sample of K entries without replacement, deterministic per seed.
/// Scores are all zero; rank is the draw order.
pub fn random_select(pool: &DemonstrationPool, k: usize, seed: u64, exclude: Option<&str>) -> Vec<ScoredDemo> {
    let eligible: Vec<&Demonstration> =
        pool.entries().iter().filter(|d| Some(d.id.as_str()) != exclude).collect();
    let amount = k.min(eligible.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, eligible.len(), amount)
        .into_iter()
        .enumerate()
        .map(|(i, idx)| ScoredDemo { demo_id: eligible[idx].id.clone(), score: 0.0, rank: i + 1 })
        .collect()
}

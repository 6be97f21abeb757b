use std::collections::{BTreeMap, BTreeSet};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{DemonstrationPool, RetrievalError, Scorer};
use crate::text::tokenize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    /// Term-frequency saturation.
    pub k1: f64,
    /// Length normalization strength.
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

impl Bm25Params {
    fn validate(self) -> Result<Self, RetrievalError> {
        if self.k1 > 0.0 && (0.0..=1.0).contains(&self.b) {
            Ok(self)
        } else {
            Err(RetrievalError::Params { k1: self.k1, b: self.b })
        }
    }
}

/// Inverted index over the paragraphs of a demonstration pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub params: Bm25Params,
    doc_ids: Vec<String>,
    doc_len: Vec<usize>,
    /// term → (document index, term frequency), ascending by document.
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    avg_dl: f64,
}

impl Bm25Index {
    pub fn build(pool: &DemonstrationPool, params: Bm25Params) -> Result<Self, RetrievalError> {
        let docs: Vec<(&str, Vec<String>)> =
            pool.entries().iter().map(|d| (d.id.as_str(), tokenize(&d.paragraph))).collect();
        Self::from_tokens(docs, params)
    }

    /// Builds from pre-tokenized documents.
    pub fn from_tokens<'a, I>(docs: I, params: Bm25Params) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (&'a str, Vec<String>)>,
    {
        let params = params.validate()?;
        let mut doc_ids = Vec::new();
        let mut doc_len = Vec::new();
        let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
        for (idx, (id, tokens)) in docs.into_iter().enumerate() {
            doc_ids.push(id.to_string());
            doc_len.push(tokens.len());
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, f) in tf {
                postings.entry(t).or_default().push((idx, f));
            }
        }
        if doc_ids.is_empty() {
            return Err(RetrievalError::EmptyPool);
        }
        let avg_dl = doc_len.iter().sum::<usize>() as f64 / doc_ids.len() as f64;
        Ok(Bm25Index { params, doc_ids, doc_len, postings, avg_dl })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_dl(&self) -> f64 {
        self.avg_dl
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_len(&self, doc: usize) -> usize {
        self.doc_len[doc]
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_freq(&self, term: &str, doc: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.binary_search_by_key(&doc, |&(d, _)| d).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == id)
    }

    /// `ln(1 + (N − df + 0.5) / (df + 0.5))`, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = 1.0 - b + b * self.doc_len[doc] as f64 / self.avg_dl;
        idf * (tf * (k1 + 1.0)) / (tf + k1 * norm)
    }

    /// Scores every document by walking the postings of each query term.
    pub fn score_all_tokens(&self, query: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_count()];
        let unique: BTreeSet<&str> = query.iter().map(String::as_str).collect();
        for term in unique {
            let Some(postings) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for &(doc, tf) in postings {
                scores[doc] += self.term_weight(idf, tf, doc);
            }
        }
        scores
    }
}

/// BM25 score of one document for the unique terms of `query`; terms
/// missing from the index contribute nothing.
pub fn bm25_score(index: &Bm25Index, query: &[String], doc_id: &str) -> Result<f64, RetrievalError> {
    let doc = index.doc_index(doc_id).ok_or_else(|| RetrievalError::UnknownDoc(doc_id.into()))?;
    let unique: BTreeSet<&str> = query.iter().map(String::as_str).collect();
    Ok(unique
        .into_iter()
        .map(|t| match index.term_freq(t, doc) {
            0 => 0.0,
            tf => index.term_weight(index.idf(t), tf, doc),
        })
        .sum())
}

/// BM25 scorer that (re)builds its index whenever the pool changes.
pub struct Bm25Scorer {
    params: Bm25Params,
    cache: RwLock<Option<Bm25Index>>,
}

impl Bm25Scorer {
    pub fn new(params: Bm25Params) -> Self {
        Bm25Scorer { params, cache: RwLock::new(None) }
    }

    fn matches(index: &Bm25Index, pool: &DemonstrationPool) -> bool {
        index.doc_ids.len() == pool.len() && index.doc_ids.iter().zip(pool.entries()).all(|(a, d)| *a == d.id)
    }
}

impl Default for Bm25Scorer {
    fn default() -> Self {
        Bm25Scorer::new(Bm25Params::default())
    }
}

impl Scorer for Bm25Scorer {
    fn score_all(&self, pool: &DemonstrationPool, query: &str) -> Result<Vec<f64>, RetrievalError> {
        let tokens = tokenize(query);
        if let Some(index) = self.cache.read().expect("bm25 cache poisoned").as_ref() {
            if Self::matches(index, pool) {
                return Ok(index.score_all_tokens(&tokens));
            }
        }
        let index = Bm25Index::build(pool, self.params)?;
        let scores = index.score_all_tokens(&tokens);
        *self.cache.write().expect("bm25 cache poisoned") = Some(index);
        Ok(scores)
    }
}

//! Versioned on-disk artifacts.
//!
//! Every `.db` file is pretty-printed JSON of the form
//! `{"kind": …, "version": 1, "data": …}`. Maps are ordered, so equal
//! contents always serialize to equal bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::extractor::{ExtractConfig, ExtractionResult};
use crate::record::SynthesisRecord;
use crate::retrieval::DemonstrationPool;
use crate::searchql::SearchRecord;

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed artifact: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a `{expected}` artifact, found `{found}`")]
    Kind { expected: &'static str, found: String },
    #[error("unsupported {kind} version {found} (this build reads {STORE_VERSION})")]
    Version { kind: &'static str, found: u32 },
}

/// A typed artifact with a stable kind tag.
pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    kind: &'a str,
    version: u32,
    data: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    kind: String,
    version: u32,
    data: T,
}

#[derive(Deserialize)]
struct Header {
    kind: String,
    version: u32,
}

pub fn to_string<T: Artifact>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(&EnvelopeRef { kind: T::KIND, version: STORE_VERSION, data: value })
        .expect("artifacts serialize");
    s.push('\n');
    s
}

pub fn from_str<T: Artifact>(text: &str) -> Result<T, StoreError> {
    let header: Header = serde_json::from_str(text)?;
    if header.kind != T::KIND {
        return Err(StoreError::Kind { expected: T::KIND, found: header.kind });
    }
    if header.version != STORE_VERSION {
        return Err(StoreError::Version { kind: T::KIND, found: header.version });
    }
    let env: Envelope<T> = serde_json::from_str(text)?;
    debug_assert_eq!((env.kind.as_str(), env.version), (T::KIND, STORE_VERSION));
    Ok(env.data)
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io { path: path.display().to_string(), source }
}

pub fn save<T: Artifact>(path: impl AsRef<Path>, value: &T) -> Result<(), StoreError> {
    let path = path.as_ref();
    std::fs::write(path, to_string(value)).map_err(|e| io_err(path, e))
}

pub fn load<T: Artifact>(path: impl AsRef<Path>) -> Result<T, StoreError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    from_str(&text)
}

/// Writes any serializable report as pretty JSON.
pub fn write_report<T: Serialize>(path: impl AsRef<Path>, report: &T) -> Result<(), StoreError> {
    let path = path.as_ref();
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| io_err(path, e))
}

/// Ingested corpus plus detector labels once they exist.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusDb {
    pub corpus: Corpus,
    #[serde(default)]
    pub labels: BTreeMap<String, bool>,
}

impl Artifact for CorpusDb {
    const KIND: &'static str = "corpus";
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolDb {
    pub pool: DemonstrationPool,
}

impl Artifact for PoolDb {
    const KIND: &'static str = "pool";
}

impl PoolDb {
    pub fn gold(&self) -> GoldDb {
        GoldDb { gold: self.pool.entries().iter().map(|d| (d.id.clone(), d.gold.clone())).collect() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldDb {
    pub gold: BTreeMap<String, SynthesisRecord>,
}

impl Artifact for GoldDb {
    const KIND: &'static str = "gold";
}

/// Source context kept next to each result so the results file is
/// searchable on its own.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphContext {
    pub doi: String,
    pub title: String,
    pub text: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsDb {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ExtractConfig>,
    pub results: Vec<ExtractionResult>,
    pub context: BTreeMap<String, ParagraphContext>,
}

impl Artifact for ResultsDb {
    const KIND: &'static str = "results";
}

impl ResultsDb {
    pub fn search_records(&self) -> Vec<SearchRecord> {
        self.results
            .iter()
            .map(|r| {
                let ctx = self.context.get(&r.paragraph_id);
                SearchRecord {
                    id: r.paragraph_id.clone(),
                    doi: ctx.map(|c| c.doi.clone()).unwrap_or_default(),
                    title: ctx.map(|c| c.title.clone()).unwrap_or_default(),
                    paragraph: ctx.map(|c| c.text.clone()).unwrap_or_default(),
                    record: r.record.clone(),
                }
            })
            .collect()
    }

    pub fn records(&self) -> Vec<(String, SynthesisRecord)> {
        self.results.iter().map(|r| (r.paragraph_id.clone(), r.record.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Slot;

    #[test]
    fn round_trip_and_kind_check() {
        let mut g = GoldDb::default();
        g.gold.insert("d#p0".into(), SynthesisRecord::new().with(Slot::SolventName, "DMF"));
        let s = to_string(&g);
        assert!(s.starts_with("{\n  \"kind\": \"gold\",\n  \"version\": 1,"));
        assert_eq!(from_str::<GoldDb>(&s).unwrap(), g);
        assert!(matches!(from_str::<PoolDb>(&s), Err(StoreError::Kind { .. })));
        let bumped = s.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(from_str::<GoldDb>(&bumped), Err(StoreError::Version { found: 9, .. })));
    }

    #[test]
    fn files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pool.db");
        save(&p, &PoolDb::default()).unwrap();
        assert_eq!(load::<PoolDb>(&p).unwrap(), PoolDb::default());
        assert!(matches!(load::<PoolDb>(dir.path().join("nope.db")), Err(StoreError::Io { .. })));
    }
}

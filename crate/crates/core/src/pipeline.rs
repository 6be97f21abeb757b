//! The whole chain in one call: ingest → detect → retrieve → extract →
//! resolve → normalize → eval, plus the artifacts each stage leaves behind.
//!
//! With a replay gateway every artifact is a pure function of the inputs
//! and the cassette, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coref::{harvest_anaphors, resolve, AnaphorTable, ResolutionReport};
use crate::corpus::{apply_pipeline_filters, ingest, Corpus, CorpusError, CorpusStats};
use crate::detector::{DetectorError, ParagraphClassifier};
use crate::evalkit::{score_run, EvalError, RunScore, SCORING_POLICY};
use crate::extractor::{ExtractConfig, ExtractError, ExtractionMode, Extractor};
use crate::llmgate::{Gateway, UsageLedger};
use crate::normalize::{frequency_table, normalize_records, Category, NormalizeConfig, NormalizeError, NormalizeOutcome};
use crate::promptkit::PromptTemplate;
use crate::record::{Slot, SynthesisRecord};
use crate::retrieval::{Bm25Params, Bm25Scorer, DemonstrationPool, DenseScorer, EmbeddingProvider, RetrievalAlgo, Scorer};
use crate::store::{self, CorpusDb, ParagraphContext, ResultsDb, StoreError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("detector: {0}")]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("dense retrieval requested without an embedding provider")]
    NoEmbedder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub extract: ExtractConfig,
    pub normalize: NormalizeConfig,
    pub bm25: Bm25Params,
    /// Run the coreference stage.
    pub resolve: bool,
    pub parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            extract: ExtractConfig::default(),
            normalize: NormalizeConfig::default(),
            bm25: Bm25Params::default(),
            resolve: true,
            parallelism: 1,
        }
    }
}

/// Aggregate view of a results store, served by `GET /stats`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusStats>,
    pub results: usize,
    pub unparseable: usize,
    pub repaired: usize,
    /// Non-empty values per slot.
    pub slot_fill: BTreeMap<String, usize>,
    /// Ten most frequent names per category.
    pub top_names: BTreeMap<Category, Vec<(String, usize)>>,
}

impl StatsReport {
    pub fn build(corpus: Option<&CorpusStats>, results: &ResultsDb) -> Self {
        let mut slot_fill: BTreeMap<String, usize> = Slot::ALL.iter().map(|s| (s.key().to_string(), 0)).collect();
        for r in &results.results {
            for (slot, v) in r.record.iter() {
                if v.is_some() {
                    *slot_fill.get_mut(slot.key()).expect("all slots seeded") += 1;
                }
            }
        }
        let top_names = Category::ALL
            .iter()
            .map(|&c| {
                let mut t = frequency_table(results.results.iter().filter_map(|r| r.record.get(c.slot())));
                t.truncate(10);
                (c, t)
            })
            .collect();
        StatsReport {
            corpus: corpus.cloned(),
            results: results.results.len(),
            unparseable: results.results.iter().filter(|r| r.unparseable).count(),
            repaired: results.results.iter().filter(|r| r.repaired).count(),
            slot_fill,
            top_names,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scoring_policy: String,
    /// Result ids without a gold record; not scored.
    pub unscored: Vec<String>,
    pub score: RunScore,
}

/// Scores the results that have gold; the rest are listed, not failed.
pub fn evaluate_records(
    records: &[(String, SynthesisRecord)],
    gold: &BTreeMap<String, SynthesisRecord>,
) -> Result<EvalReport, EvalError> {
    let (scored, unscored): (Vec<_>, Vec<_>) = records.iter().partition(|(id, _)| gold.contains_key(id));
    let score = score_run(scored.iter().map(|(id, r)| (id.as_str(), r)), gold)?;
    Ok(EvalReport {
        scoring_policy: SCORING_POLICY.to_string(),
        unscored: unscored.into_iter().map(|(id, _)| id.clone()).collect(),
        score,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolveOutcome {
    pub tables: BTreeMap<String, AnaphorTable>,
    pub report: ResolutionReport,
    pub diagnostics: Vec<String>,
}

/// Harvests one anaphor table per source document and resolves every
/// result's linker name against it. Results whose paragraph is not in the
/// corpus pass through with a diagnostic.
pub fn resolve_results(results: &mut ResultsDb, corpus: &Corpus, gateway: &Gateway, model: &str) -> ResolveOutcome {
    let mut out = ResolveOutcome::default();
    for r in &mut results.results {
        let Some(p) = corpus.paragraph(&r.paragraph_id) else {
            out.diagnostics.push(format!("{}: paragraph not in corpus", r.paragraph_id));
            continue;
        };
        let doc = corpus.document(&p.doc_doi).expect("paragraph belongs to a document");
        let table = out.tables.entry(doc.doi.clone()).or_insert_with(|| {
            let h = harvest_anaphors(gateway, model, doc, p.index);
            out.diagnostics.extend(h.diagnostics.iter().map(|d| format!("{}: {d}", doc.doi)));
            h.table
        });
        let res = resolve(&r.record, table);
        out.report.add(&r.paragraph_id, &res);
        r.record = res.record;
    }
    out
}

pub struct PipelineRun {
    pub corpus: CorpusDb,
    pub stats: CorpusStats,
    pub results: ResultsDb,
    pub resolved: ResultsDb,
    pub resolution: ResolveOutcome,
    pub normalized: NormalizeOutcome,
    pub eval: EvalReport,
    pub usage: UsageLedger,
}

#[allow(clippy::too_many_arguments)]
pub fn run_pipeline(
    corpus_jsonl: &str,
    classifier: &dyn ParagraphClassifier,
    pool: &DemonstrationPool,
    gold: &BTreeMap<String, SynthesisRecord>,
    template: &PromptTemplate,
    gateway: &Gateway,
    embedder: Option<&dyn EmbeddingProvider>,
    config: &PipelineConfig,
) -> Result<PipelineRun, PipelineError> {
    let corpus = ingest(corpus_jsonl.as_bytes())?;
    let mut labels = BTreeMap::new();
    for p in corpus.paragraphs() {
        labels.insert(p.id.clone(), classifier.classify(&p.text)?.label);
    }
    let (filtered, stats) = apply_pipeline_filters(&corpus, &labels);

    let bm25;
    let dense;
    let few = config.extract.mode == ExtractionMode::Few;
    let scorer: Option<&dyn Scorer> = match config.extract.algo {
        RetrievalAlgo::Bm25 => {
            bm25 = Bm25Scorer::new(config.bm25);
            Some(&bm25)
        }
        RetrievalAlgo::Dense if few => {
            dense = DenseScorer::new(embedder.ok_or(PipelineError::NoEmbedder)?);
            Some(&dense)
        }
        _ => None,
    };
    let extractor = Extractor::new(template, gateway).with_pool(pool, scorer);
    let inputs: Vec<(String, String)> =
        filtered.selected.iter().map(|s| (s.paragraph.id.clone(), s.paragraph.text.clone())).collect();
    let extracted = extractor
        .extract_all(&inputs, &config.extract, config.parallelism)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let context = filtered
        .selected
        .iter()
        .map(|s| {
            let doc = corpus.document(&s.doi).expect("selected from corpus");
            (s.paragraph.id.clone(), ParagraphContext { doi: s.doi.clone(), title: doc.title.clone(), text: s.paragraph.text.clone() })
        })
        .collect();
    let results = ResultsDb { config: Some(config.extract.clone()), results: extracted, context };

    let mut resolved = results.clone();
    let resolution = if config.resolve {
        resolve_results(&mut resolved, &corpus, gateway, &config.extract.model)
    } else {
        ResolveOutcome::default()
    };

    let normalized = normalize_records(&resolved.records(), Some(gateway), &config.normalize)?;
    // Gold holds surface forms, so scoring happens before canonicalization.
    let eval = evaluate_records(&resolved.records(), gold)?;

    Ok(PipelineRun {
        corpus: CorpusDb { corpus, labels },
        stats,
        results,
        resolved,
        resolution,
        normalized,
        eval,
        usage: gateway.ledger(),
    })
}

impl PipelineRun {
    pub fn normalized_db(&self) -> ResultsDb {
        let mut db = self.resolved.clone();
        let by_id: BTreeMap<&str, &SynthesisRecord> =
            self.normalized.records.iter().map(|(id, r)| (id.as_str(), r)).collect();
        for r in &mut db.results {
            if let Some(n) = by_id.get(r.paragraph_id.as_str()) {
                r.record = (*n).clone();
            }
        }
        db
    }

    /// Writes every artifact into `dir` and returns the paths, in a fixed
    /// order.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, StoreError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| StoreError::Io { path: dir.display().to_string(), source: e })?;
        let mut written = Vec::new();
        let mut put = |name: &str, body: String| -> Result<(), StoreError> {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| StoreError::Io { path: p.display().to_string(), source: e })?;
            written.push(p);
            Ok(())
        };
        put("corpus.db", store::to_string(&self.corpus))?;
        put("stats.json", pretty(&StatsReport::build(Some(&self.stats), &self.results)))?;
        put("results.db", store::to_string(&self.results))?;
        put("resolved.db", store::to_string(&self.resolved))?;
        put("resolution.json", pretty(&self.resolution))?;
        put("resolution.md", self.resolution.report.render_table())?;
        put("normalized.db", store::to_string(&self.normalized_db()))?;
        put("normalize.json", pretty(&self.normalized.report))?;
        put("features.csv", self.normalized.features.to_csv())?;
        put("features.manifest.json", self.normalized.features.manifest_json())?;
        put("eval.json", pretty(&self.eval))?;
        put("usage.json", pretty(&self.usage))?;
        Ok(written)
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

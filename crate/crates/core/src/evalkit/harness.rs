use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::{summarize, Summary};
use super::{score_run, ConfusionMatrix, EvalError, MetricSet};
use crate::extractor::{ExtractConfig, ExtractError, ExtractionMode, ExtractionResult, Extractor};
use crate::llmgate::Gateway;
use crate::promptkit::{PromptTemplate, ShotOrdering};
use crate::record::SynthesisRecord;
use crate::retrieval::{Bm25Params, Bm25Scorer, DemonstrationPool, DenseScorer, EmbeddingProvider, RetrievalAlgo, Scorer};

/// Stated in every report: how a wrong non-empty prediction is counted.
pub const SCORING_POLICY: &str =
    "single-cell: a present prediction that differs from present gold counts as FP only (not FP+FN)";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("pool size {requested} exceeds the {available} available demonstrations")]
    PoolSize { requested: usize, available: usize },
    #[error("dense retrieval requested without an embedding provider")]
    NoEmbedder,
    #[error("shot multiset for `{query}` differs between orderings")]
    ShotMismatch { query: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub label: String,
    pub k: usize,
    /// `None` means the full pool.
    pub pool_size: Option<usize>,
    pub algo: RetrievalAlgo,
    pub ordering: ShotOrdering,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub seed: u64,
    pub matrix: ConfusionMatrix,
    pub metrics: MetricSet,
    pub unparseable: usize,
    /// Demonstration ids of the sub-pool, when one was sampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_pool: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub f1: Summary,
    pub acc: Summary,
    pub precision: Summary,
    pub recall: Summary,
}

impl MetricSummary {
    pub fn over(trials: &[TrialMetrics]) -> Self {
        let pick = |f: fn(&MetricSet) -> Option<f64>| -> Summary {
            summarize(&trials.iter().filter_map(|t| f(&t.metrics)).collect::<Vec<_>>())
        };
        MetricSummary {
            f1: pick(|m| m.f1),
            acc: pick(|m| m.acc),
            precision: pick(|m| m.precision),
            recall: pick(|m| m.recall),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scoring_policy: String,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialMetrics>,
    pub summary: MetricSummary,
}

impl ExperimentReport {
    fn new(config: ExperimentConfig, trials: Vec<TrialMetrics>) -> Self {
        ExperimentReport {
            scoring_policy: SCORING_POLICY.to_string(),
            summary: MetricSummary::over(&trials),
            config,
            trials,
        }
    }
}

/// A gold-labelled paragraph to evaluate on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub id: String,
    pub text: String,
    pub gold: SynthesisRecord,
}

/// Runs extraction trials over a query set and scores them.
pub struct Harness<'a> {
    pub template: &'a PromptTemplate,
    pub gateway: &'a Gateway,
    pub pool: &'a DemonstrationPool,
    pub queries: Vec<EvalQuery>,
    pub embedder: Option<&'a dyn EmbeddingProvider>,
    pub bm25: Bm25Params,
    /// Model, knowledge toggles and token limits for every trial.
    pub base: ExtractConfig,
    pub parallelism: usize,
}

impl<'a> Harness<'a> {
    /// Every pool entry is a query; its own paragraph is excluded from its
    /// shots by the extractor.
    pub fn leave_one_out(template: &'a PromptTemplate, gateway: &'a Gateway, pool: &'a DemonstrationPool) -> Self {
        let queries = pool
            .entries()
            .iter()
            .map(|d| EvalQuery { id: d.id.clone(), text: d.paragraph.clone(), gold: d.gold.clone() })
            .collect();
        Harness {
            template,
            gateway,
            pool,
            queries,
            embedder: None,
            bm25: Bm25Params::default(),
            base: ExtractConfig::default(),
            parallelism: 1,
        }
    }

    fn gold(&self) -> BTreeMap<String, SynthesisRecord> {
        self.queries.iter().map(|q| (q.id.clone(), q.gold.clone())).collect()
    }

    fn config(&self, k: usize, algo: RetrievalAlgo, ordering: ShotOrdering, seed: u64) -> ExtractConfig {
        ExtractConfig {
            mode: if k == 0 { ExtractionMode::Zero } else { ExtractionMode::Few },
            k,
            algo,
            ordering,
            seed,
            ..self.base.clone()
        }
    }

    /// One pass over all queries.
    pub fn run(&self, pool: &DemonstrationPool, cfg: &ExtractConfig) -> Result<Vec<ExtractionResult>, HarnessError> {
        let bm25;
        let dense;
        let scorer: Option<&dyn Scorer> = match cfg.algo {
            RetrievalAlgo::Bm25 => {
                bm25 = Bm25Scorer::new(self.bm25);
                Some(&bm25)
            }
            RetrievalAlgo::Dense if cfg.mode == ExtractionMode::Few => {
                dense = DenseScorer::new(self.embedder.ok_or(HarnessError::NoEmbedder)?);
                Some(&dense)
            }
            _ => None,
        };
        let ex = Extractor::new(self.template, self.gateway).with_pool(pool, scorer);
        let inputs: Vec<(String, String)> = self.queries.iter().map(|q| (q.id.clone(), q.text.clone())).collect();
        ex.extract_all(&inputs, cfg, self.parallelism).into_iter().map(|r| r.map_err(HarnessError::from)).collect()
    }

    fn trial(&self, pool: &DemonstrationPool, cfg: &ExtractConfig, sub_pool: Option<Vec<String>>) -> Result<(TrialMetrics, Vec<ExtractionResult>), HarnessError> {
        let results = self.run(pool, cfg)?;
        let score = score_run(results.iter().map(|r| (r.paragraph_id.as_str(), &r.record)), &self.gold())?;
        let unparseable = results.iter().filter(|r| r.unparseable).count();
        Ok((TrialMetrics { seed: cfg.seed, matrix: score.matrix, metrics: score.metrics, unparseable, sub_pool }, results))
    }

    /// One report per K, in the given order. `K = 0` is zero-shot.
    pub fn sweep_k(&self, ks: &[usize], algo: RetrievalAlgo, seeds: &[u64]) -> Result<Vec<ExperimentReport>, HarnessError> {
        ks.iter()
            .map(|&k| {
                let ordering = self.base.ordering;
                let trials = seeds
                    .iter()
                    .map(|&s| self.trial(self.pool, &self.config(k, algo, ordering, s), None).map(|t| t.0))
                    .collect::<Result<Vec<_>, _>>()?;
                let config = ExperimentConfig { label: format!("k={k}"), k, pool_size: None, algo, ordering, seeds: seeds.to_vec() };
                Ok(ExperimentReport::new(config, trials))
            })
            .collect()
    }

    /// Random sub-pools of each size, one per seed. Size 0 degenerates to
    /// zero-shot extraction.
    pub fn sweep_pool_size(
        &self,
        sizes: &[usize],
        k: usize,
        algo: RetrievalAlgo,
        seeds: &[u64],
    ) -> Result<Vec<ExperimentReport>, HarnessError> {
        let available = self.pool.len();
        sizes
            .iter()
            .map(|&size| {
                if size > available {
                    return Err(HarnessError::PoolSize { requested: size, available });
                }
                let ordering = self.base.ordering;
                let trials = seeds
                    .iter()
                    .map(|&seed| {
                        let ids = sample_pool_ids(self.pool, size, seed);
                        let sub = self.pool.subset(&ids.iter().cloned().collect());
                        let eff_k = if size == 0 { 0 } else { k };
                        self.trial(&sub, &self.config(eff_k, algo, ordering, seed), Some(ids)).map(|t| t.0)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let config = ExperimentConfig {
                    label: format!("pool={size}"),
                    k,
                    pool_size: Some(size),
                    algo,
                    ordering,
                    seeds: seeds.to_vec(),
                };
                Ok(ExperimentReport::new(config, trials))
            })
            .collect()
    }

    /// Same K and retrieval, different shot orderings. Fails if any query
    /// receives a different shot multiset under some ordering.
    pub fn compare_orderings(
        &self,
        orderings: &[ShotOrdering],
        k: usize,
        algo: RetrievalAlgo,
        seeds: &[u64],
    ) -> Result<Vec<ExperimentReport>, HarnessError> {
        let mut reference: BTreeMap<(u64, String), Vec<String>> = BTreeMap::new();
        let mut reports = Vec::new();
        for &ordering in orderings {
            let mut trials = Vec::new();
            for &seed in seeds {
                let (t, results) = self.trial(self.pool, &self.config(k, algo, ordering, seed), None)?;
                for r in &results {
                    let mut shots = r.shot_ids.clone();
                    shots.sort();
                    let key = (seed, r.paragraph_id.clone());
                    match reference.get(&key) {
                        Some(prev) if *prev != shots => {
                            return Err(HarnessError::ShotMismatch { query: r.paragraph_id.clone() })
                        }
                        Some(_) => {}
                        None => {
                            reference.insert(key, shots);
                        }
                    }
                }
                trials.push(t);
            }
            let config = ExperimentConfig {
                label: format!("ordering={}", ordering_label(ordering)),
                k,
                pool_size: None,
                algo,
                ordering,
                seeds: seeds.to_vec(),
            };
            reports.push(ExperimentReport::new(config, trials));
        }
        Ok(reports)
    }

    /// One report per retrieval algorithm at fixed K.
    pub fn compare_algorithms(&self, algos: &[RetrievalAlgo], k: usize, seeds: &[u64]) -> Result<Vec<ExperimentReport>, HarnessError> {
        algos
            .iter()
            .map(|&algo| {
                let mut reports = self.sweep_k(&[k], algo, seeds)?;
                let mut r = reports.remove(0);
                r.config.label = format!("algo={}", algo_label(algo));
                Ok(r)
            })
            .collect()
    }
}

pub fn algo_label(a: RetrievalAlgo) -> &'static str {
    match a {
        RetrievalAlgo::Bm25 => "bm25",
        RetrievalAlgo::Dense => "dense",
        RetrievalAlgo::Random => "random",
    }
}

pub fn ordering_label(o: ShotOrdering) -> String {
    match o {
        ShotOrdering::SimilarityDescending => "similarity_descending".into(),
        ShotOrdering::SimilarityAscending => "similarity_ascending".into(),
        ShotOrdering::PoolOrder => "pool_order".into(),
        ShotOrdering::Random { seed } => format!("random:{seed}"),
    }
}

/// Ids of a uniform random sub-pool, in pool order.
pub fn sample_pool_ids(pool: &DemonstrationPool, size: usize, seed: u64) -> Vec<String> {
    let size = size.min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: BTreeSet<usize> = sample(&mut rng, pool.len(), size).into_iter().collect();
    picked.into_iter().map(|i| pool.entries()[i].id.clone()).collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

/// Tab-separated, one row per report, ready for plotting.
pub fn plot_table(reports: &[ExperimentReport]) -> String {
    let mut s = String::from(
        "label\tk\tpool_size\talgo\tordering\ttrials\tf1_mean\tf1_ci95\tacc_mean\tacc_ci95\tprecision_mean\trecall_mean\n",
    );
    for r in reports {
        let c = &r.config;
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.label,
            c.k,
            c.pool_size.map_or("full".to_string(), |n| n.to_string()),
            algo_label(c.algo),
            ordering_label(c.ordering),
            r.trials.len(),
            cell(r.summary.f1.mean),
            cell(r.summary.f1.ci95),
            cell(r.summary.acc.mean),
            cell(r.summary.acc.ci95),
            cell(r.summary.precision.mean),
            cell(r.summary.recall.mean),
        )
        .unwrap();
    }
    s
}

/// Report file body: the scoring policy header, then JSON.
pub fn render_reports(reports: &[ExperimentReport]) -> String {
    let mut s = format!("# scoring policy: {SCORING_POLICY}\n");
    s.push_str(&serde_json::to_string_pretty(reports).expect("infallible"));
    s.push('\n');
    s
}

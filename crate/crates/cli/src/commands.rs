use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use synthex::corpus::{apply_pipeline_filters, ingest};
use synthex::detector::{classify, train_stratified_cv, DetectorModel, LabeledParagraph, TrainConfig};
use synthex::evalkit::{plot_table, render_reports, ExperimentReport, Harness};
use synthex::extractor::{ExtractConfig, ExtractionMode, Extractor};
use synthex::llmgate::ChatRequest;
use synthex::normalize::{normalize_records, FrequencyFilter, NormalizeConfig};
use synthex::pipeline::{evaluate_records, resolve_results, run_pipeline, PipelineConfig, StatsReport};
use synthex::promptkit::{Knowledge, PromptTemplate, ShotOrdering};
use synthex::retrieval::{
    random_select, top_k, Bm25Scorer, DemonstrationPool, DenseScorer, EmbeddingProvider, HashingEmbedder,
    HttpEmbeddingProvider, RetrievalAlgo, Scorer,
};
use synthex::searchql::{parse, search};
use synthex::store::{self, CorpusDb, GoldDb, ParagraphContext, PoolDb, ResultsDb};
use synthex_server::{AppState, ServerConfig, ServerState, Store};

use crate::{Command, DetectCommand, EmbedArgs, ExtractArgs, LlmCommand, SweepArgs, SweepCommand};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Prints to stdout; a closed pipe (`| head`) ends output quietly.
fn print_json<T: serde::Serialize>(v: &T) {
    use std::io::Write;
    let body = serde_json::to_string_pretty(v).expect("reports serialize");
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{body}").and_then(|_| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: writing stdout: {e}");
            std::process::exit(1);
        }
    }
}

fn load_pool(path: &Path) -> Result<DemonstrationPool> {
    Ok(store::load::<PoolDb>(path)?.pool)
}

fn load_model(path: &Path) -> Result<DetectorModel> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(DetectorModel::read_from(BufReader::new(f))?)
}

fn template(path: Option<&Path>) -> Result<PromptTemplate> {
    match path {
        Some(p) => PromptTemplate::parse(&read(p)?).with_context(|| format!("template {}", p.display())),
        None => Ok(PromptTemplate::default_template()),
    }
}

impl ExtractArgs {
    fn config(&self) -> Result<ExtractConfig> {
        let mode: ExtractionMode = self.mode.parse().map_err(|e: String| anyhow!(e))?;
        Ok(ExtractConfig {
            mode,
            k: if mode == ExtractionMode::Zero { 0 } else { self.k },
            algo: self.algo.parse().map_err(|e: String| anyhow!(e))?,
            ordering: self.ordering.parse().map_err(|e: String| anyhow!(e))?,
            knowledge: if self.no_knowledge { Knowledge::NONE } else { Knowledge::default() },
            model: self.model_name.clone(),
            max_output_tokens: self.max_output_tokens,
            seed: self.seed,
        })
    }
}

impl EmbedArgs {
    /// The configured endpoint, or the offline hashing embedder.
    fn provider(&self) -> Box<dyn EmbeddingProvider> {
        match &self.embed_url {
            Some(url) => Box::new(HttpEmbeddingProvider { endpoint: url.clone(), dimension: self.embed_dim }),
            None => Box::new(HashingEmbedder::new(self.embed_dim)),
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { input, out, stats } => {
            let f = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let corpus = ingest(BufReader::new(f))?;
            let report = serde_json::json!({
                "documents": corpus.documents.len(),
                "paragraphs": corpus.paragraphs().count(),
                "intake": corpus.intake,
                "rejects": corpus.rejects,
                "warnings": corpus.warnings,
            });
            store::write_report(stats.unwrap_or_else(|| sidecar(&out, ".stats.json")), &report)?;
            eprintln!(
                "ingested {} documents ({} paragraphs), {} rejected",
                corpus.documents.len(),
                corpus.paragraphs().count(),
                corpus.rejects.len()
            );
            store::save(&out, &CorpusDb { corpus, labels: BTreeMap::new() })?;
        }
        Command::Detect(DetectCommand::Train { samples, folds, out, report }) => {
            let samples: Vec<LabeledParagraph> = read(&samples)?
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("sample line {}", i + 1)))
                .collect::<Result<_>>()?;
            let (model, cv) = train_stratified_cv(&samples, folds, &TrainConfig::default())?;
            std::fs::write(&out, model.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
            store::write_report(report.unwrap_or_else(|| sidecar(&out, ".cv.json")), &cv)?;
            eprintln!(
                "{} samples, {folds} folds: mean F1 {:?}, vocabulary {}",
                samples.len(),
                cv.mean.f1,
                model.vocabulary().len()
            );
        }
        Command::Detect(DetectCommand::Run { model, corpus, out }) => {
            let model = load_model(&model)?;
            let mut db: CorpusDb = store::load(&corpus)?;
            db.labels = db.corpus.paragraphs().map(|p| (p.id.clone(), classify(&model, &p.text).label)).collect();
            let (_, stats) = apply_pipeline_filters(&db.corpus, &db.labels);
            eprintln!(
                "{} of {} paragraphs positive; funnel {:?}",
                db.labels.values().filter(|&&l| l).count(),
                db.labels.len(),
                stats.funnel()
            );
            store::save(out.as_ref().unwrap_or(&corpus), &db)?;
        }
        Command::Retrieve { algo, k, pool, query_id, corpus, seed, embed } => {
            let pool = load_pool(&pool)?;
            let text = match pool.get(&query_id) {
                Some(d) => d.paragraph.clone(),
                None => {
                    let path = corpus.ok_or_else(|| anyhow!("`{query_id}` is not in the pool; pass --corpus"))?;
                    let db: CorpusDb = store::load(&path)?;
                    db.corpus.paragraph(&query_id).ok_or_else(|| anyhow!("unknown paragraph `{query_id}`"))?.text.clone()
                }
            };
            let algo: RetrievalAlgo = algo.parse().map_err(|e: String| anyhow!(e))?;
            let provider = embed.provider();
            let ranked = match algo {
                RetrievalAlgo::Bm25 => top_k(&Bm25Scorer::default(), &pool, &text, k, Some(&query_id))?,
                RetrievalAlgo::Dense => top_k(&DenseScorer::new(provider.as_ref()), &pool, &text, k, Some(&query_id))?,
                RetrievalAlgo::Random => random_select(&pool, k, seed, Some(&query_id)),
            };
            print_json(&ranked);
        }
        Command::Extract { extract, corpus, pool, out, paragraphs, parallelism, llm, embed } => {
            let cfg = extract.config()?;
            let db: CorpusDb = store::load(&corpus)?;
            let targets: Vec<(String, String)> = if paragraphs.is_empty() {
                let (filtered, _) = apply_pipeline_filters(&db.corpus, &db.labels);
                filtered.selected.into_iter().map(|s| (s.paragraph.id, s.paragraph.text)).collect()
            } else {
                paragraphs
                    .iter()
                    .map(|id| {
                        let p = db.corpus.paragraph(id).ok_or_else(|| anyhow!("unknown paragraph `{id}`"))?;
                        Ok((id.clone(), p.text.clone()))
                    })
                    .collect::<Result<_>>()?
            };
            if targets.is_empty() {
                bail!("no paragraph survives the corpus funnel; run `synthex detect run` or pass --paragraph");
            }
            let pool = pool.map(|p| load_pool(&p)).transpose()?.unwrap_or_default();
            let tpl = template(extract.template.as_deref())?;
            let gw = llm.gateway()?;
            let provider = embed.provider();
            let bm25 = Bm25Scorer::default();
            let dense = DenseScorer::new(provider.as_ref());
            let scorer: Option<&dyn Scorer> = match cfg.algo {
                RetrievalAlgo::Bm25 => Some(&bm25),
                RetrievalAlgo::Dense => Some(&dense),
                RetrievalAlgo::Random => None,
            };
            let extractor = Extractor::new(&tpl, &gw).with_pool(&pool, scorer);
            let results = extractor.extract_all(&targets, &cfg, parallelism).into_iter().collect::<Result<Vec<_>, _>>();
            llm.finish(&gw)?;
            let results = results?;
            let context = results
                .iter()
                .map(|r| {
                    let p = db.corpus.paragraph(&r.paragraph_id).expect("target from corpus");
                    let doc = db.corpus.document(&p.doc_doi).expect("paragraph has a document");
                    (r.paragraph_id.clone(), ParagraphContext { doi: doc.doi.clone(), title: doc.title.clone(), text: p.text.clone() })
                })
                .collect();
            let results = ResultsDb { config: Some(cfg), results, context };
            let report = StatsReport::build(None, &results);
            eprintln!("{} results, {} repaired, {} unparseable", report.results, report.repaired, report.unparseable);
            store::save(&out, &results)?;
        }
        Command::Resolve { results, corpus, out, report, model, llm } => {
            let mut db: ResultsDb = store::load(&results)?;
            let corpus_db: CorpusDb = store::load(&corpus)?;
            let gw = llm.gateway()?;
            let outcome = resolve_results(&mut db, &corpus_db.corpus, &gw, &model);
            llm.finish(&gw)?;
            let out = out.unwrap_or(results);
            std::fs::write(report.unwrap_or_else(|| sidecar(&out, ".resolution.md")), outcome.report.render_table())?;
            store::write_report(sidecar(&out, ".resolution.json"), &outcome)?;
            for d in &outcome.diagnostics {
                eprintln!("warning: {d}");
            }
            eprintln!(
                "{} of {} proxy occurrences resolved",
                outcome.report.resolved, outcome.report.occurrences
            );
            store::save(&out, &db)?;
        }
        Command::Normalize { results, filter, export, threshold, no_llm, out, model, llm } => {
            let db: ResultsDb = store::load(&results)?;
            let filter: FrequencyFilter = filter.parse()?;
            let cfg = NormalizeConfig { threshold, filter, merge_synonyms: !no_llm, model };
            let gw = if no_llm { None } else { Some(llm.gateway()?) };
            let outcome = normalize_records(&db.records(), gw.as_ref(), &cfg);
            if let Some(gw) = &gw {
                llm.finish(gw)?;
            }
            let outcome = outcome?;
            std::fs::write(&export, outcome.features.to_csv()).with_context(|| format!("writing {}", export.display()))?;
            std::fs::write(export.with_extension("manifest.json"), outcome.features.manifest_json())?;
            store::write_report(export.with_extension("normalize.json"), &outcome.report)?;
            if let Some(out) = out {
                let mut normalized = db.clone();
                let by_id: BTreeMap<&str, _> = outcome.records.iter().map(|(id, r)| (id.as_str(), r)).collect();
                for r in &mut normalized.results {
                    if let Some(n) = by_id.get(r.paragraph_id.as_str()) {
                        r.record = (*n).clone();
                    }
                }
                store::save(&out, &normalized)?;
            }
            eprintln!("{} of {} records kept after the frequency filter", outcome.kept.len(), outcome.records.len());
        }
        Command::Eval { gold, results, out } => {
            let gold: GoldDb = store::load(&gold)?;
            let db: ResultsDb = store::load(&results)?;
            let report = evaluate_records(&db.records(), &gold.gold)?;
            match out {
                Some(p) => store::write_report(p, &report)?,
                None => print_json(&report),
            }
            let m = report.score.metrics;
            eprintln!("P {:?} R {:?} F1 {:?} ACC {:?}", m.precision, m.recall, m.f1, m.acc);
        }
        Command::Sweep { what } => sweep(what)?,
        Command::Search { query, db, limit, offset } => {
            let db: ResultsDb = store::load(&db)?;
            let ast = parse(&query).map_err(|e| anyhow!("{e}\n  {query}\n  {}^", " ".repeat(e.offset)))?;
            let rows = db.search_records();
            let page = search(&rows, &ast, limit, offset);
            let by_id: BTreeMap<&str, _> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
            let hits: Vec<_> = page
                .hits
                .iter()
                .map(|h| serde_json::json!({ "hit": h, "record": by_id[h.id.as_str()] }))
                .collect();
            print_json(&serde_json::json!({ "total": page.total, "offset": page.offset, "limit": page.limit, "hits": hits }));
        }
        Command::Llm(LlmCommand::Ping { model, llm }) => {
            let gw = llm.gateway()?;
            let mut req = ChatRequest::new(&model, "Reply with the single word: pong", "ping");
            req.max_output_tokens = 8;
            let reply = gw.complete(&req);
            llm.finish(&gw)?;
            let reply = reply?;
            println!("{} ({})", reply.text.trim(), gw.mode());
            print_json(&gw.ledger());
        }
        Command::Serve { port, host, pool, log, model, static_dir, max_jobs, llm, embed } => {
            if llm.record {
                bail!("serve does not record cassettes; record with the batch commands");
            }
            let pool = pool.map(|p| load_pool(&p)).transpose()?.unwrap_or_default();
            let initial = ServerState::with_pool(pool);
            let store = match &log {
                Some(path) => Store::open(path, initial)?,
                None => Store::in_memory(initial),
            };
            let mut config = ServerConfig::new(llm.gateway()?);
            config.detector = model.map(|m| load_model(&m)).transpose()?.map(|m| Arc::new(m) as _);
            config.embedder = Some(Arc::from(embed.provider()));
            config.static_dir = static_dir;
            config.max_jobs = max_jobs;
            let addr: std::net::SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port")?;
            eprintln!("listening on http://{addr}/v1");
            tokio::runtime::Runtime::new()?.block_on(synthex_server::serve(AppState::new(config, store), addr))?;
        }
        Command::Pipeline { corpus, model, pool, gold, out, filter, no_resolve, parallelism, extract, llm, embed } => {
            let corpus_text = read(&corpus)?;
            let model = load_model(&model)?;
            let pool = load_pool(&pool)?;
            let gold = gold.map(|g| store::load::<GoldDb>(&g)).transpose()?.unwrap_or_default().gold;
            let tpl = template(extract.template.as_deref())?;
            let gw = llm.gateway()?;
            let provider = embed.provider();
            let config = PipelineConfig {
                extract: extract.config()?,
                normalize: NormalizeConfig { filter: filter.parse()?, ..Default::default() },
                resolve: !no_resolve,
                parallelism,
                ..Default::default()
            };
            let run = run_pipeline(&corpus_text, &model, &pool, &gold, &tpl, &gw, Some(provider.as_ref()), &config);
            llm.finish(&gw)?;
            let run = run?;
            let files = run.write_to(&out)?;
            let m = run.eval.score.metrics;
            eprintln!(
                "funnel {:?}; {} results; F1 {:?} ACC {:?}; {} artifacts in {}",
                run.stats.funnel(),
                run.results.results.len(),
                m.f1,
                m.acc,
                files.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn sweep(what: SweepCommand) -> Result<()> {
    let common = match &what {
        SweepCommand::K { common, .. } | SweepCommand::Pool { common, .. } | SweepCommand::Ordering { common, .. } => common,
    };
    let SweepArgs { pool, algo, seeds, model, no_knowledge, out, table, parallelism, llm, embed } = common;
    let pool = load_pool(pool)?;
    let algo: RetrievalAlgo = algo.parse().map_err(|e: String| anyhow!(e))?;
    let tpl = PromptTemplate::default_template();
    let gw = llm.gateway()?;
    let provider = embed.provider();
    let mut h = Harness::leave_one_out(&tpl, &gw, &pool);
    h.embedder = Some(provider.as_ref());
    h.parallelism = *parallelism;
    h.base.model = model.clone();
    if *no_knowledge {
        h.base.knowledge = Knowledge::NONE;
    }
    let reports: Result<Vec<ExperimentReport>, _> = match &what {
        SweepCommand::K { values, .. } => h.sweep_k(values, algo, seeds),
        SweepCommand::Pool { sizes, k, .. } => h.sweep_pool_size(sizes, *k, algo, seeds),
        SweepCommand::Ordering { orderings, k, .. } => {
            let orderings: Vec<ShotOrdering> =
                orderings.iter().map(|o| o.parse().map_err(|e: String| anyhow!(e))).collect::<Result<_>>()?;
            h.compare_orderings(&orderings, *k, algo, seeds)
        }
    };
    llm.finish(&gw)?;
    let reports = reports?;
    let body = render_reports(&reports);
    match out {
        Some(p) => std::fs::write(p, body)?,
        None => print!("{body}"),
    }
    let tsv = plot_table(&reports);
    match table {
        Some(p) => std::fs::write(p, tsv)?,
        None => eprint!("{tsv}"),
    }
    Ok(())
}

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use synthex::corpus::{apply_pipeline_filters, ingest, Reject, SourceRecord, Warning};
use synthex::curation::{
    advance_curation, AgreementResult, AnnotationTask, CurationAction, CurationError, CurationState, FewShotChecker,
};
use synthex::detector::ParagraphClassifier;
use synthex::extractor::{ExtractConfig, ExtractionMode, Extractor};
use synthex::llmgate::Gateway;
use synthex::pipeline::StatsReport;
use synthex::promptkit::PromptTemplate;
use synthex::retrieval::{
    Bm25Scorer, Demonstration, DemonstrationPool, DenseScorer, EmbeddingProvider, RetrievalAlgo, Scorer,
};
use synthex::searchql::{parse, search, SearchHit, SearchRecord};
use synthex::store::ParagraphContext;
use synthex::SynthesisRecord;
use tokio::sync::Semaphore;

use crate::error::ApiError;
use crate::jobs::{JobConfig, JobRecord, JobStatus};
use crate::state::{Event, Store};

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 1000;

pub struct ServerConfig {
    pub gateway: Arc<Gateway>,
    pub template: PromptTemplate,
    /// Labels paragraphs on ingestion when present.
    pub detector: Option<Arc<dyn ParagraphClassifier>>,
    pub embedder: Option<Arc<dyn EmbeddingProvider>>,
    /// Extraction jobs running at once.
    pub max_jobs: usize,
    /// Web UI build output, served under `/app`.
    pub static_dir: Option<PathBuf>,
    /// Config of the AI pre-annotation attached to new tasks.
    pub pre_annotation: ExtractConfig,
    /// Config of the few-shot re-extraction during curation.
    pub few_shot_check: ExtractConfig,
}

impl ServerConfig {
    pub fn new(gateway: Gateway) -> Self {
        ServerConfig {
            gateway: Arc::new(gateway),
            template: PromptTemplate::default_template(),
            detector: None,
            embedder: None,
            max_jobs: 2,
            static_dir: None,
            pre_annotation: ExtractConfig::zero_shot(),
            few_shot_check: ExtractConfig::default(),
        }
    }
}

pub struct AppState {
    pub config: ServerConfig,
    pub store: RwLock<Store>,
    workers: Arc<Semaphore>,
    task_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

pub type Shared = Arc<AppState>;

impl AppState {
    pub fn new(config: ServerConfig, store: Store) -> Shared {
        let workers = Arc::new(Semaphore::new(config.max_jobs.max(1)));
        Arc::new(AppState { config, store: RwLock::new(store), workers, task_locks: Mutex::default() })
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Store> {
        self.store.read().expect("store lock poisoned")
    }

    fn commit(&self, event: Event) -> Result<(), ApiError> {
        self.store.write().expect("store lock poisoned").commit(event).map_err(ApiError::from)
    }

    fn task_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.task_locks.lock().expect("lock map poisoned").entry(id.to_string()).or_default().clone()
    }
}

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/documents", post(add_documents))
        .route("/jobs/extract", post(submit_job))
        .route("/jobs/{id}", get(get_job))
        .route("/records", get(records))
        .route("/stats", get(stats))
        .route("/annotations/tasks", post(create_task))
        .route("/annotations/tasks/{id}", get(get_task))
        .route("/annotations/tasks/{id}/draft", post(submit_draft))
        .route("/annotations/tasks/{id}/agreement", post(agreement))
        .route("/curation/{id}/advance", post(advance))
        .route("/pool", get(pool));
    let app = match &state.config.static_dir {
        Some(dir) => Router::new().nest_service("/app", tower_http::services::ServeDir::new(dir)),
        None => Router::new().route("/app", get(placeholder)).route("/app/", get(placeholder)),
    };
    Router::new().nest("/v1", api).merge(app).with_state(state)
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    serde_json::from_slice(text).map_err(|e| ApiError::bad_request("invalid_body", e.to_string()))
}

fn scorer_for<'a>(
    cfg: &ExtractConfig,
    bm25: &'a Bm25Scorer,
    dense: &'a Option<DenseScorer<'a>>,
) -> Option<&'a dyn Scorer> {
    match cfg.algo {
        RetrievalAlgo::Bm25 => Some(bm25),
        RetrievalAlgo::Dense => dense.as_ref().map(|d| d as &dyn Scorer),
        RetrievalAlgo::Random => None,
    }
}

fn needs_embedder(cfg: &ExtractConfig) -> bool {
    cfg.mode == ExtractionMode::Few && cfg.k > 0 && cfg.algo == RetrievalAlgo::Dense
}

async fn placeholder() -> Html<&'static str> {
    Html("<!doctype html><title>synthex</title><p>No web UI build is configured; the API lives under <code>/v1</code>.</p>")
}

async fn health(State(app): State<Shared>) -> Json<serde_json::Value> {
    let seq = app.read().state.seq;
    Json(serde_json::json!({ "status": "ok", "llm_mode": app.config.gateway.mode(), "events": seq }))
}

// ---- documents -------------------------------------------------------------

#[derive(Deserialize)]
struct DocumentsRequest {
    /// Line-delimited records, as accepted by `synthex ingest`.
    #[serde(default)]
    jsonl: Option<String>,
    #[serde(default)]
    documents: Vec<SourceRecord>,
    /// Paragraph labels; override the detector.
    #[serde(default)]
    labels: BTreeMap<String, bool>,
}

#[derive(Serialize)]
struct DocumentsResponse {
    added: Vec<String>,
    paragraphs: usize,
    positive_paragraphs: usize,
    rejects: Vec<Reject>,
    warnings: Vec<Warning>,
}

async fn add_documents(State(app): State<Shared>, bytes: Bytes) -> Result<(StatusCode, Json<DocumentsResponse>), ApiError> {
    let req: DocumentsRequest = body(&bytes)?;
    let mut lines = req.jsonl.unwrap_or_default();
    for d in &req.documents {
        lines.push('\n');
        lines.push_str(&serde_json::to_string(d).expect("records serialize"));
    }
    let parsed = ingest(lines.as_bytes()).map_err(|e| ApiError::bad_request("invalid_body", e.to_string()))?;
    let mut rejects = parsed.rejects;
    let mut documents = Vec::new();
    {
        let store = app.read();
        for d in parsed.documents {
            if store.state.corpus.document(&d.doi).is_some() {
                rejects.push(Reject { line: 0, doi: Some(d.doi), reason: "duplicate doi".into() });
            } else {
                documents.push(d);
            }
        }
    }
    let mut labels = BTreeMap::new();
    for p in documents.iter().flat_map(|d| d.paragraphs.iter()) {
        let label = match (req.labels.get(&p.id), &app.config.detector) {
            (Some(&l), _) => l,
            (None, Some(det)) => det.classify(&p.text).map_err(|e| ApiError::upstream(e.to_string()))?.label,
            (None, None) => continue,
        };
        labels.insert(p.id.clone(), label);
    }
    let response = DocumentsResponse {
        added: documents.iter().map(|d| d.doi.clone()).collect(),
        paragraphs: documents.iter().map(|d| d.paragraphs.len()).sum(),
        positive_paragraphs: labels.values().filter(|&&l| l).count(),
        rejects: rejects.clone(),
        warnings: parsed.warnings,
    };
    app.commit(Event::DocumentsAdded { documents, labels, rejects })?;
    Ok((StatusCode::CREATED, Json(response)))
}

// ---- jobs ------------------------------------------------------------------

async fn submit_job(State(app): State<Shared>, bytes: Bytes) -> Result<(StatusCode, Json<JobRecord>), ApiError> {
    let config: JobConfig = body(&bytes)?;
    if needs_embedder(&config.extract) && app.config.embedder.is_none() {
        return Err(ApiError::bad_request("no_embedder", "dense retrieval needs an embedding provider".into()));
    }
    let (targets, job) = {
        let store = app.read();
        let state = &store.state;
        let targets: Vec<(String, String, ParagraphContext)> = match &config.paragraph_ids {
            Some(ids) => ids
                .iter()
                .map(|id| {
                    let p = state.corpus.paragraph(id).ok_or_else(|| ApiError::not_found("paragraph", id))?;
                    let doc = state.corpus.document(&p.doc_doi).expect("paragraph has a document");
                    Ok((id.clone(), p.text.clone(), ParagraphContext { doi: doc.doi.clone(), title: doc.title.clone(), text: p.text.clone() }))
                })
                .collect::<Result<_, ApiError>>()?,
            None => apply_pipeline_filters(&state.corpus, &state.labels)
                .0
                .selected
                .into_iter()
                .map(|s| {
                    let title = state.corpus.document(&s.doi).map(|d| d.title.clone()).unwrap_or_default();
                    let ctx = ParagraphContext { doi: s.doi.clone(), title, text: s.paragraph.text.clone() };
                    (s.paragraph.id, s.paragraph.text, ctx)
                })
                .collect(),
        };
        if targets.is_empty() {
            return Err(ApiError::bad_request(
                "no_paragraphs",
                "no paragraph survives the corpus funnel; pass paragraph_ids".into(),
            ));
        }
        let job = JobRecord::queued(format!("job-{}", state.jobs.len() + 1), config, targets.len());
        (targets, job)
    };
    app.commit(Event::JobUpdated { job: job.clone() })?;
    let worker = app.clone();
    let queued = job.clone();
    tokio::spawn(async move {
        let Ok(_permit) = worker.workers.clone().acquire_owned().await else { return };
        let _ = tokio::task::spawn_blocking(move || run_job(&worker, queued, targets)).await;
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

fn run_job(app: &AppState, mut job: JobRecord, targets: Vec<(String, String, ParagraphContext)>) {
    let update = |job: &JobRecord| {
        if let Err(e) = app.commit(Event::JobUpdated { job: job.clone() }) {
            eprintln!("{}: {}", job.id, e.message);
            return false;
        }
        true
    };
    job.status = JobStatus::Running;
    if !update(&job) {
        return;
    }
    let pool = app.read().state.pool.clone();
    let cfg = job.config.extract.clone();
    let bm25 = Bm25Scorer::default();
    let dense = app.config.embedder.as_deref().map(DenseScorer::new);
    let extractor = Extractor::new(&app.config.template, &app.config.gateway).with_pool(&pool, scorer_for(&cfg, &bm25, &dense));
    let mut results = Vec::new();
    let mut context = BTreeMap::new();
    for (id, text, ctx) in targets {
        match extractor.extract(&id, &text, &cfg) {
            Ok(r) => {
                job.progress.done += 1;
                job.progress.unparseable += usize::from(r.unparseable);
                results.push(r);
                context.insert(id, ctx);
            }
            Err(e) => {
                job.status = JobStatus::Failed(format!("{id}: {e}"));
                job.usage = app.config.gateway.ledger();
                update(&job);
                return;
            }
        }
        job.usage = app.config.gateway.ledger();
        if !update(&job) {
            return;
        }
    }
    job.result_ids = results.iter().map(|r| r.paragraph_id.clone()).collect();
    if let Err(e) = app.commit(Event::ResultsStored { job_id: job.id.clone(), results, context }) {
        job.status = JobStatus::Failed(e.message);
    } else {
        job.status = JobStatus::Succeeded;
    }
    update(&job);
}

async fn get_job(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<JobRecord>, ApiError> {
    app.read().state.jobs.get(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found("job", &id))
}

// ---- records and stats -----------------------------------------------------

#[derive(Deserialize)]
struct RecordsQuery {
    #[serde(default)]
    query: Option<String>,
    #[serde(default)]
    limit: Option<usize>,
    #[serde(default)]
    offset: Option<usize>,
}

#[derive(Serialize)]
pub struct RecordHit {
    #[serde(flatten)]
    pub hit: SearchHit,
    pub record: SearchRecord,
}

#[derive(Serialize)]
pub struct RecordsPage {
    pub query: String,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub hits: Vec<RecordHit>,
}

async fn records(State(app): State<Shared>, Query(q): Query<RecordsQuery>) -> Result<Json<RecordsPage>, ApiError> {
    let limit = q.limit.unwrap_or(DEFAULT_PAGE).min(MAX_PAGE);
    let offset = q.offset.unwrap_or(0);
    let query = q.query.unwrap_or_default();
    let rows = app.read().state.results.search_records();
    let by_id: BTreeMap<&str, &SearchRecord> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
    let (total, hits) = if query.trim().is_empty() {
        let hits = by_id
            .values()
            .skip(offset)
            .take(limit)
            .map(|r| SearchHit { id: r.id.clone(), matched_fields: Vec::new(), snippets: Vec::new() })
            .collect();
        (by_id.len(), hits)
    } else {
        let ast = parse(&query).map_err(|e| {
            ApiError::bad_request("invalid_query", e.to_string()).with_detail(serde_json::json!({ "offset": e.offset }))
        })?;
        let page = search(&rows, &ast, limit, offset);
        (page.total, page.hits)
    };
    let hits = hits.into_iter().map(|h| RecordHit { record: by_id[h.id.as_str()].clone(), hit: h }).collect();
    Ok(Json(RecordsPage { query, total, offset, limit, hits }))
}

#[derive(Serialize)]
pub struct ServerStats {
    pub documents: usize,
    pub paragraphs: usize,
    #[serde(flatten)]
    pub report: StatsReport,
}

async fn stats(State(app): State<Shared>) -> Json<ServerStats> {
    let store = app.read();
    let state = &store.state;
    Json(ServerStats {
        documents: state.corpus.documents.len(),
        paragraphs: state.corpus.paragraphs().count(),
        report: StatsReport::build(Some(&state.corpus_stats()), &state.results),
    })
}

// ---- annotation tasks ------------------------------------------------------

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
struct CreateTask {
    #[serde(default)]
    id: Option<String>,
    paragraph_id: String,
    /// Needed only when the paragraph is not in the corpus.
    #[serde(default)]
    paragraph: Option<String>,
    annotators: [String; 2],
    #[serde(default = "default_true")]
    pre_annotate: bool,
}

/// A task as one viewer may see it: before agreement, annotators see only
/// their own draft.
#[derive(Serialize)]
pub struct TaskView {
    #[serde(flatten)]
    pub task: AnnotationTask,
    /// Annotators who have submitted a draft.
    pub submitted: Vec<String>,
}

fn view(task: &AnnotationTask, viewer: Option<&str>) -> TaskView {
    let mut shown = task.clone();
    shown.drafts = task.visible_drafts(viewer);
    TaskView { submitted: task.drafts.keys().cloned().collect(), task: shown }
}

fn curation_error(e: CurationError) -> ApiError {
    let status = match &e {
        CurationError::IllegalTransition { .. } | CurationError::Excluded(_) | CurationError::DraftsIncomplete => {
            StatusCode::CONFLICT
        }
        CurationError::MissingVerdicts(_) => StatusCode::UNPROCESSABLE_ENTITY,
        CurationError::UnknownAnnotator(_) | CurationError::Annotators => StatusCode::BAD_REQUEST,
        CurationError::Check(_) => StatusCode::BAD_GATEWAY,
    };
    ApiError::new(status, "curation", e.to_string())
}

fn check_version(task: &AnnotationTask, expected: Option<u64>) -> Result<(), ApiError> {
    match expected {
        Some(v) if v != task.version => Err(ApiError::new(
            StatusCode::CONFLICT,
            "stale_version",
            format!("task {} is at version {}, not {v}", task.id, task.version),
        )),
        _ => Ok(()),
    }
}

async fn create_task(State(app): State<Shared>, bytes: Bytes) -> Result<(StatusCode, Json<TaskView>), ApiError> {
    let req: CreateTask = body(&bytes)?;
    let (id, text) = {
        let store = app.read();
        let state = &store.state;
        let id = req.id.clone().unwrap_or_else(|| format!("task-{}", state.tasks.len() + 1));
        if state.tasks.contains_key(&id) {
            return Err(ApiError::new(StatusCode::CONFLICT, "duplicate_task", format!("task {id} exists")));
        }
        let text = match (state.corpus.paragraph(&req.paragraph_id), &req.paragraph) {
            (Some(p), _) => p.text.clone(),
            (None, Some(t)) if !t.trim().is_empty() => t.clone(),
            _ => return Err(ApiError::not_found("paragraph", &req.paragraph_id)),
        };
        (id, text)
    };
    let mut diagnostics = Vec::new();
    let pre = if req.pre_annotate {
        let worker = app.clone();
        let (pid, t) = (req.paragraph_id.clone(), text.clone());
        let outcome = tokio::task::spawn_blocking(move || {
            Extractor::new(&worker.config.template, &worker.config.gateway).extract(&pid, &t, &worker.config.pre_annotation)
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
        match outcome {
            Ok(r) => Some(r.record),
            Err(e) => {
                diagnostics.push(format!("pre-annotation failed: {e}"));
                None
            }
        }
    } else {
        None
    };
    let mut task = AnnotationTask::new(&id, &req.paragraph_id, &text, req.annotators, pre).map_err(curation_error)?;
    task.diagnostics = diagnostics;
    app.commit(Event::TaskUpdated { task: task.clone() })?;
    Ok((StatusCode::CREATED, Json(view(&task, None))))
}

#[derive(Deserialize)]
struct Viewer {
    #[serde(default)]
    viewer: Option<String>,
}

fn load_task(app: &AppState, id: &str) -> Result<AnnotationTask, ApiError> {
    app.read().state.tasks.get(id).cloned().ok_or_else(|| ApiError::not_found("task", id))
}

async fn get_task(State(app): State<Shared>, Path(id): Path<String>, Query(v): Query<Viewer>) -> Result<Json<TaskView>, ApiError> {
    Ok(Json(view(&load_task(&app, &id)?, v.viewer.as_deref())))
}

#[derive(Deserialize)]
struct DraftRequest {
    annotator: String,
    record: SynthesisRecord,
    #[serde(default)]
    version: Option<u64>,
}

async fn submit_draft(State(app): State<Shared>, Path(id): Path<String>, bytes: Bytes) -> Result<Json<TaskView>, ApiError> {
    let req: DraftRequest = body(&bytes)?;
    let lock = app.task_lock(&id);
    let _guard = lock.lock().await;
    let mut task = load_task(&app, &id)?;
    check_version(&task, req.version)?;
    task.submit_draft(&req.annotator, req.record).map_err(curation_error)?;
    app.commit(Event::TaskUpdated { task: task.clone() })?;
    Ok(Json(view(&task, Some(&req.annotator))))
}

#[derive(Deserialize)]
struct VersionOnly {
    #[serde(default)]
    version: Option<u64>,
}

#[derive(Serialize)]
pub struct AgreementResponse {
    pub agreement: AgreementResult,
    pub merged: SynthesisRecord,
    pub version: u64,
}

async fn agreement(State(app): State<Shared>, Path(id): Path<String>, bytes: Bytes) -> Result<Json<AgreementResponse>, ApiError> {
    let req: VersionOnly = body(&bytes)?;
    let lock = app.task_lock(&id);
    let _guard = lock.lock().await;
    let mut task = load_task(&app, &id)?;
    check_version(&task, req.version)?;
    let agreement = task.compute_agreement().map_err(curation_error)?.clone();
    app.commit(Event::TaskUpdated { task: task.clone() })?;
    Ok(Json(AgreementResponse { agreement, merged: task.merged.clone().expect("set with agreement"), version: task.version }))
}

/// Few-shot re-extraction against a snapshot of the finalized pool.
struct PoolChecker<'a> {
    app: &'a AppState,
    pool: &'a DemonstrationPool,
}

impl FewShotChecker for PoolChecker<'_> {
    fn check(&mut self, paragraph_id: &str, paragraph: &str) -> Result<(SynthesisRecord, Vec<String>), String> {
        let mut diagnostics = Vec::new();
        let mut cfg = self.app.config.few_shot_check.clone();
        let usable = self.pool.entries().iter().any(|d| d.id != paragraph_id);
        if !usable && cfg.mode == ExtractionMode::Few {
            diagnostics.push("demonstration pool is empty: fell back to zero-shot".to_string());
            cfg = ExtractConfig { mode: ExtractionMode::Zero, k: 0, ..cfg };
        }
        if needs_embedder(&cfg) && self.app.config.embedder.is_none() {
            return Err("dense retrieval needs an embedding provider".into());
        }
        let bm25 = Bm25Scorer::default();
        let dense = self.app.config.embedder.as_deref().map(DenseScorer::new);
        let r = Extractor::new(&self.app.config.template, &self.app.config.gateway)
            .with_pool(self.pool, scorer_for(&cfg, &bm25, &dense))
            .extract(paragraph_id, paragraph, &cfg)
            .map_err(|e| e.to_string())?;
        diagnostics.extend(r.diagnostics);
        Ok((r.record, diagnostics))
    }
}

#[derive(Deserialize)]
struct AdvanceRequest {
    #[serde(default)]
    version: Option<u64>,
    #[serde(flatten)]
    action: CurationAction,
}

#[derive(Serialize)]
pub struct AdvanceResponse {
    pub state: CurationState,
    pub task: TaskView,
    /// Demonstration id added to the pool by this transition.
    pub added_to_pool: Option<String>,
    pub pool_size: usize,
}

async fn advance(State(app): State<Shared>, Path(id): Path<String>, bytes: Bytes) -> Result<Json<AdvanceResponse>, ApiError> {
    let req: AdvanceRequest = body(&bytes)?;
    let lock = app.task_lock(&id);
    let _guard = lock.lock().await;
    let task = load_task(&app, &id)?;
    check_version(&task, req.version)?;
    if matches!(req.action, CurationAction::Finalize { .. }) && app.read().state.pool.get(&task.paragraph_id).is_some() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "duplicate_demonstration",
            format!("the pool already holds {}", task.paragraph_id),
        ));
    }
    let worker = app.clone();
    let (task, outcome) = tokio::task::spawn_blocking(move || {
        let pool = worker.read().state.pool.clone();
        let mut task = task;
        let outcome = advance_curation(&mut task, req.action, &mut PoolChecker { app: &worker, pool: &pool });
        (task, outcome)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    let state = outcome.map_err(curation_error)?;
    app.commit(Event::TaskUpdated { task: task.clone() })?;
    let demo: Option<Demonstration> = task.demonstration();
    let added_to_pool = demo.as_ref().map(|d| d.id.clone());
    if let Some(demonstration) = demo {
        app.commit(Event::PoolAdded { demonstration })?;
    }
    let pool_size = app.read().state.pool.len();
    Ok(Json(AdvanceResponse { state, task: view(&task, None), added_to_pool, pool_size }))
}

#[derive(Serialize)]
pub struct PoolView {
    pub size: usize,
    pub entries: Vec<Demonstration>,
}

async fn pool(State(app): State<Shared>) -> Json<PoolView> {
    let entries = app.read().state.pool.entries().to_vec();
    Json(PoolView { size: entries.len(), entries })
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = serde_json::json!({ "error": self.code, "message": self.message });
        if let Some(d) = self.detail {
            body["detail"] = d;
        }
        (self.status, Json(body)).into_response()
    }
}


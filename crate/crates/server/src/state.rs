//! Server state as a fold over an append-only event log.
//!
//! Every mutation is one [`Event`]. Events are applied in memory and, when
//! a log file is configured, appended as one JSON line each. Reopening the
//! log replays it, so the log alone is the store.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synthex::corpus::{apply_pipeline_filters, Corpus, Document, Reject};
use synthex::curation::AnnotationTask;
use synthex::extractor::ExtractionResult;
use synthex::retrieval::{Demonstration, DemonstrationPool};
use synthex::store::{ParagraphContext, ResultsDb};
use thiserror::Error;

use crate::jobs::JobRecord;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("event log line {line}: {source}")]
    Corrupt { line: usize, source: serde_json::Error },
    #[error("job {0} is already finished")]
    TerminalJob(String),
    #[error("job {0}: progress cannot go backwards")]
    Regressed(String),
    #[error("task {0}: curation state cannot go backwards")]
    TaskRegressed(String),
    #[error("pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    DocumentsAdded {
        documents: Vec<Document>,
        labels: BTreeMap<String, bool>,
        rejects: Vec<Reject>,
    },
    JobUpdated {
        job: JobRecord,
    },
    ResultsStored {
        job_id: String,
        results: Vec<ExtractionResult>,
        context: BTreeMap<String, ParagraphContext>,
    },
    TaskUpdated {
        task: AnnotationTask,
    },
    PoolAdded {
        demonstration: Demonstration,
    },
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    seq: u64,
    #[serde(flatten)]
    event: Event,
}

#[derive(Clone, Debug, Default)]
pub struct ServerState {
    pub corpus: Corpus,
    pub labels: BTreeMap<String, bool>,
    /// Latest result per paragraph, in first-extraction order.
    pub results: ResultsDb,
    pub tasks: BTreeMap<String, AnnotationTask>,
    pub pool: DemonstrationPool,
    pub jobs: BTreeMap<String, JobRecord>,
    pub seq: u64,
}

impl ServerState {
    pub fn with_pool(pool: DemonstrationPool) -> Self {
        ServerState { pool, ..Default::default() }
    }

    /// Checks an event against the current state without applying it.
    pub fn validate(&self, event: &Event) -> Result<(), StateError> {
        match event {
            Event::JobUpdated { job } => {
                if let Some(prev) = self.jobs.get(&job.id) {
                    if prev.status.is_terminal() {
                        return Err(StateError::TerminalJob(job.id.clone()));
                    }
                    if !prev.progress.precedes(&job.progress) {
                        return Err(StateError::Regressed(job.id.clone()));
                    }
                }
            }
            Event::TaskUpdated { task } => {
                if let Some(prev) = self.tasks.get(&task.id) {
                    if task.state < prev.state {
                        return Err(StateError::TaskRegressed(task.id.clone()));
                    }
                }
            }
            Event::PoolAdded { demonstration } => {
                let mut probe = DemonstrationPool::default();
                probe.push(demonstration.clone()).map_err(|e| StateError::Pool(e.to_string()))?;
                if self.pool.get(&demonstration.id).is_some() {
                    return Err(StateError::Pool(format!("duplicate demonstration id: {}", demonstration.id)));
                }
            }
            Event::DocumentsAdded { .. } | Event::ResultsStored { .. } => {}
        }
        Ok(())
    }

    pub fn apply(&mut self, event: Event) -> Result<(), StateError> {
        self.validate(&event)?;
        match event {
            Event::DocumentsAdded { documents, labels, rejects } => {
                for d in documents {
                    if let Err(r) = self.corpus.push(d) {
                        self.corpus.rejects.push(r);
                    }
                }
                self.corpus.rejects.extend(rejects);
                self.labels.extend(labels);
            }
            Event::JobUpdated { job } => {
                self.jobs.insert(job.id.clone(), job);
            }
            Event::ResultsStored { results, context, .. } => {
                for r in results {
                    match self.results.results.iter_mut().find(|x| x.paragraph_id == r.paragraph_id) {
                        Some(slot) => *slot = r,
                        None => self.results.results.push(r),
                    }
                }
                self.results.context.extend(context);
            }
            Event::TaskUpdated { task } => {
                self.tasks.insert(task.id.clone(), task);
            }
            Event::PoolAdded { demonstration } => {
                self.pool.push(demonstration).map_err(|e| StateError::Pool(e.to_string()))?;
            }
        }
        self.seq += 1;
        Ok(())
    }

    /// Documents, paragraphs, and the funnel over the current labels.
    pub fn corpus_stats(&self) -> synthex::corpus::CorpusStats {
        apply_pipeline_filters(&self.corpus, &self.labels).1
    }
}

/// State plus its backing log file.
#[derive(Debug)]
pub struct Store {
    pub state: ServerState,
    log: Option<(PathBuf, File)>,
}

impl Store {
    pub fn in_memory(state: ServerState) -> Self {
        Store { state, log: None }
    }

    /// Replays `path` on top of `initial` and keeps appending to it.
    pub fn open(path: &Path, initial: ServerState) -> Result<Self, StateError> {
        let io = |source| StateError::Io { path: path.display().to_string(), source };
        let mut state = initial;
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: LogLine =
                    serde_json::from_str(&line).map_err(|source| StateError::Corrupt { line: i + 1, source })?;
                state.apply(entry.event)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Store { state, log: Some((path.to_path_buf(), file)) })
    }

    /// Validates, logs, then applies.
    pub fn commit(&mut self, event: Event) -> Result<(), StateError> {
        self.state.validate(&event)?;
        if let Some((path, file)) = &mut self.log {
            let line = serde_json::to_string(&LogLine { seq: self.state.seq + 1, event: event.clone() })
                .expect("events serialize");
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(|source| StateError::Io { path: path.display().to_string(), source })?;
        }
        self.state.apply(event)
    }
}

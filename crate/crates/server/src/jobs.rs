//! Extraction jobs: a config, monotone progress counters and a terminal
//! outcome.

use serde::{Deserialize, Serialize};
use synthex::extractor::ExtractConfig;
use synthex::llmgate::UsageLedger;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    #[serde(default)]
    pub extract: ExtractConfig,
    /// Paragraphs to extract. Defaults to the paragraphs that survive the
    /// corpus funnel under the current detector labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paragraph_ids: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "error", rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed(String),
}

impl JobStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed(_))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobProgress {
    pub total: usize,
    pub done: usize,
    /// Results that came back unparseable after the repair round.
    pub unparseable: usize,
}

impl JobProgress {
    /// True when `next` does not move any counter backwards.
    pub fn precedes(&self, next: &JobProgress) -> bool {
        next.done >= self.done && next.unparseable >= self.unparseable && (self.total == 0 || next.total == self.total)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub config: JobConfig,
    #[serde(flatten)]
    pub status: JobStatus,
    pub progress: JobProgress,
    /// Gateway ledger at the last update.
    pub usage: UsageLedger,
    /// Paragraph ids whose results this job stored.
    pub result_ids: Vec<String>,
}

impl JobRecord {
    pub fn queued(id: String, config: JobConfig, total: usize) -> Self {
        JobRecord {
            id,
            config,
            status: JobStatus::Queued,
            progress: JobProgress { total, ..Default::default() },
            usage: UsageLedger::default(),
            result_ids: Vec::new(),
        }
    }
}

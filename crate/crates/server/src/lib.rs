//! HTTP service over the extraction pipeline.
//!
//! Every route lives under `/v1` and speaks JSON. State is an in-memory
//! fold over an append-only event log (see [`state`]); extraction jobs run
//! on a bounded set of blocking workers, and curation transitions are
//! serialized per task.

pub mod app;
pub mod error;
pub mod jobs;
pub mod state;

pub use app::{router, AppState, ServerConfig, Shared};
pub use error::ApiError;
pub use jobs::{JobConfig, JobProgress, JobRecord, JobStatus};
pub use state::{Event, ServerState, StateError, Store};

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Shared, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use synthex::llmgate::{Cassette, Gateway, HttpChatProvider};

#[derive(Args, Clone, Default)]
pub struct LlmArgs {
    /// Replay responses from this cassette; with `--record`, append to it.
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Call the live provider and record every exchange into `--cassette`.
    #[arg(long, requires = "cassette")]
    pub record: bool,
    /// Requests per minute.
    #[arg(long)]
    pub rpm: Option<f64>,
    /// Concurrent requests.
    #[arg(long, default_value_t = 4)]
    pub max_inflight: usize,
}

impl LlmArgs {
    /// Replay, record or live, in that order of preference. Live and record
    /// read `SYNTHEX_API_KEY` / `SYNTHEX_API_BASE`.
    pub fn gateway(&self) -> Result<Gateway> {
        let gw = match (&self.cassette, self.record) {
            (Some(path), false) => {
                if !path.exists() {
                    bail!("cassette {} does not exist (use --record to create it)", path.display());
                }
                Gateway::replay(Cassette::load(path).with_context(|| format!("loading {}", path.display()))?)
            }
            (Some(path), true) => {
                let existing = if path.exists() { Cassette::load(path)? } else { Cassette::default() };
                Gateway::record(HttpChatProvider::from_env(), existing)
            }
            (None, _) => Gateway::live(HttpChatProvider::from_env()),
        };
        let gw = gw.with_max_inflight(self.max_inflight);
        Ok(match self.rpm {
            Some(rpm) => gw.with_rate_limit(rpm),
            None => gw,
        })
    }

    /// Writes the recorded cassette back when recording.
    pub fn finish(&self, gw: &Gateway) -> Result<()> {
        if let (Some(path), true, Some(c)) = (&self.cassette, self.record, gw.cassette()) {
            c.save(path).with_context(|| format!("saving {}", path.display()))?;
        }
        Ok(())
    }
}

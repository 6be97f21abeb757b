use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fingerprint, ChatRequest, ChatResponse, LlmError};

pub const CASSETTE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    /// Kept for human review; matching uses only the fingerprint.
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// Ordered (fingerprint, response) log stored as pretty-printed JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cassette {
    pub version: u32,
    entries: Vec<CassetteEntry>,
}

impl Default for Cassette {
    fn default() -> Self {
        Cassette { version: CASSETTE_VERSION, entries: Vec::new() }
    }
}

impl Cassette {
    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    pub fn lookup(&self, fingerprint: &str) -> Option<&ChatResponse> {
        self.entries.iter().find(|e| e.fingerprint == fingerprint).map(|e| &e.response)
    }

    /// Appends an exchange. Re-inserting an identical exchange is a no-op;
    /// a different response under an existing fingerprint is an error.
    pub fn insert(&mut self, request: ChatRequest, response: ChatResponse) -> Result<(), LlmError> {
        let fp = fingerprint(&request);
        match self.lookup(&fp) {
            Some(existing) if *existing == response => Ok(()),
            Some(_) => Err(LlmError::Cassette(format!("conflicting response for fingerprint {fp}"))),
            None => {
                self.entries.push(CassetteEntry { fingerprint: fp, request, response });
                Ok(())
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let c: Cassette = serde_json::from_str(text).map_err(|e| LlmError::Cassette(e.to_string()))?;
        if c.version != CASSETTE_VERSION {
            return Err(LlmError::Cassette(format!("unsupported cassette version {}", c.version)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &c.entries {
            if fingerprint(&e.request) != e.fingerprint {
                return Err(LlmError::Cassette(format!("entry {} does not match its request", e.fingerprint)));
            }
            if !seen.insert(e.fingerprint.as_str()) {
                return Err(LlmError::Cassette(format!("duplicate fingerprint {}", e.fingerprint)));
            }
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("cassette serialization is infallible");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_validation() {
        let mut c = Cassette::default();
        let req = ChatRequest::new("m", "s", "u");
        c.insert(req.clone(), ChatResponse::text("a", 1, 2)).unwrap();
        c.insert(req.clone(), ChatResponse::text("a", 1, 2)).unwrap();
        assert!(c.insert(req, ChatResponse::text("b", 1, 2)).is_err());
        assert_eq!(c.entries().len(), 1);
        let back = Cassette::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);

        let tampered = c.to_json().replace("\"u\"", "\"v\"");
        assert!(Cassette::from_json(&tampered).is_err());
    }
}

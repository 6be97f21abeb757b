//! Proxy-name resolution for organic linkers.
//!
//! Papers often define a linker once ("… 4,4'-bipyridine (L) …") and use the
//! short label afterwards. Resolution runs in three steps: an LLM lists the
//! label definitions found in the text before the synthesis paragraph,
//! [`detect_proxies`] finds labels in the extracted linker name, and
//! [`resolve`] substitutes every label with a known definition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::Document;
use crate::extractor::locate_json;
use crate::llmgate::{ChatRequest, Gateway};
use crate::record::{Slot, SynthesisRecord};

#[derive(Debug, Error, PartialEq)]
pub enum CorefError {
    #[error("`{0}` is not a proxy label")]
    NotAProxy(String),
    #[error("full name for `{proxy}` is itself a proxy or contains one: `{name}`")]
    ProxyInName { proxy: String, name: String },
    #[error("empty full name for `{0}`")]
    EmptyName(String),
    #[error("paragraph index {index} out of range for {doi}")]
    ParagraphIndex { doi: String, index: usize },
}

/// Recognizes `(H<digits>?)?L<digits>?` as a whole token, `L` uppercase.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProxyPattern;

impl ProxyPattern {
    pub fn is_match(&self, token: &str) -> bool {
        let rest = match token.strip_prefix('H') {
            Some(r) => r.trim_start_matches(|c: char| c.is_ascii_digit()),
            None => token,
        };
        match rest.strip_prefix('L') {
            Some(tail) => tail.chars().all(|c| c.is_ascii_digit()),
            None => false,
        }
    }
}

/// Byte spans of the tokens of `text`. Hyphens and apostrophes stay inside
/// tokens so that `L-proline` or `4,4'-bpy` never yield a bare `L`.
fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let keep = |c: char| c.is_alphanumeric() || c == '-' || c == '\'';
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (keep(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

/// Proxy tokens of `value`, in order of appearance.
pub fn detect_proxies(value: &str) -> Vec<String> {
    token_spans(value)
        .into_iter()
        .map(|(s, e)| &value[s..e])
        .filter(|t| ProxyPattern.is_match(t))
        .map(str::to_string)
        .collect()
}

/// Proxy → full name for one document.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnaphorTable {
    pub source_doc: String,
    entries: BTreeMap<String, String>,
}

impl AnaphorTable {
    pub fn new(source_doc: &str) -> Self {
        AnaphorTable { source_doc: source_doc.to_string(), entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, proxy: &str, full_name: &str) -> Result<(), CorefError> {
        let proxy = proxy.trim();
        let name = full_name.trim();
        if !ProxyPattern.is_match(proxy) {
            return Err(CorefError::NotAProxy(proxy.to_string()));
        }
        if name.is_empty() {
            return Err(CorefError::EmptyName(proxy.to_string()));
        }
        if !detect_proxies(name).is_empty() {
            return Err(CorefError::ProxyInName { proxy: proxy.to_string(), name: name.to_string() });
        }
        self.entries.insert(proxy.to_string(), name.to_string());
        Ok(())
    }

    pub fn with(mut self, proxy: &str, full_name: &str) -> Self {
        self.insert(proxy, full_name).expect("valid anaphor pair");
        self
    }

    pub fn get(&self, proxy: &str) -> Option<&str> {
        self.entries.get(proxy).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Harvest {
    pub table: AnaphorTable,
    pub diagnostics: Vec<String>,
}

pub const HARVEST_SYSTEM: &str = "You read the opening sections of a chemistry article. List every short \
label that the text defines as an abbreviation for a chemical compound, together with the full name it \
stands for. Answer with one JSON object whose keys are the labels exactly as written and whose values are \
the full names exactly as written. Answer {} when the text defines no labels.";

/// Text of all paragraphs before `index`, joined by blank lines.
pub fn pre_text(doc: &Document, index: usize) -> Result<String, CorefError> {
    if index >= doc.paragraphs.len() {
        return Err(CorefError::ParagraphIndex { doi: doc.doi.clone(), index });
    }
    Ok(doc.paragraphs[..index].iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n\n"))
}

pub fn harvest_request(model: &str, pre_text: &str) -> ChatRequest {
    ChatRequest::new(model, HARVEST_SYSTEM, pre_text)
}

/// Asks the model for label definitions in the text preceding the synthesis
/// paragraph. Failures degrade to an empty table with a diagnostic.
pub fn harvest_anaphors(gateway: &Gateway, model: &str, doc: &Document, index: usize) -> Harvest {
    let mut harvest = Harvest { table: AnaphorTable::new(&doc.doi), diagnostics: Vec::new() };
    let text = match pre_text(doc, index) {
        Ok(t) => t,
        Err(e) => {
            harvest.diagnostics.push(format!("error: {e}"));
            return harvest;
        }
    };
    if text.trim().is_empty() {
        return harvest;
    }
    let raw = match gateway.complete(&harvest_request(model, &text)) {
        Ok(r) => r.text,
        Err(e) => {
            harvest.diagnostics.push(format!("error: {e}"));
            return harvest;
        }
    };
    parse_anaphors(&raw, &mut harvest);
    harvest
}

/// Accepts `{"L": "name"}` or `[{"proxy": "L", "name": "name"}]`.
fn parse_anaphors(raw: &str, harvest: &mut Harvest) {
    let pairs: Vec<(String, Value)> = match locate_json(raw) {
        Some(Value::Object(o)) => o.into_iter().collect(),
        Some(Value::Array(items)) => items
            .into_iter()
            .filter_map(|v| {
                let proxy = v.get("proxy")?.as_str()?.to_string();
                Some((proxy, v.get("name").cloned().unwrap_or(Value::Null)))
            })
            .collect(),
        _ => {
            if !raw.trim().is_empty() {
                harvest.diagnostics.push("error: no JSON object in anaphor answer".into());
            }
            return;
        }
    };
    for (proxy, name) in pairs {
        let Some(name) = name.as_str() else {
            harvest.diagnostics.push(format!("dropped {proxy}: non-string name"));
            continue;
        };
        if let Err(e) = harvest.table.insert(&proxy, name) {
            harvest.diagnostics.push(format!("dropped {proxy}: {e}"));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub record: SynthesisRecord,
    /// (proxy, full name) per resolved occurrence.
    pub resolved: Vec<(String, String)>,
    pub unresolved: Vec<String>,
}

/// Replaces proxies in the organic linker name by their table entries.
pub fn resolve(record: &SynthesisRecord, table: &AnaphorTable) -> Resolution {
    let mut out = Resolution { record: record.clone(), resolved: Vec::new(), unresolved: Vec::new() };
    let Some(value) = record.get(Slot::OrganicLinkerName) else { return out };
    let mut text = String::with_capacity(value.len());
    let mut last = 0;
    for (s, e) in token_spans(value) {
        let tok = &value[s..e];
        if !ProxyPattern.is_match(tok) {
            continue;
        }
        match table.get(tok) {
            Some(full) => {
                text.push_str(&value[last..s]);
                text.push_str(full);
                last = e;
                out.resolved.push((tok.to_string(), full.to_string()));
            }
            None => out.unresolved.push(tok.to_string()),
        }
    }
    text.push_str(&value[last..]);
    out.record.set(Slot::OrganicLinkerName, Some(text));
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyStats {
    pub occurrences: usize,
    pub resolved: usize,
}

/// Corpus-level resolution summary.
///
/// *Occurrences* count every proxy token; *distinct* counts each proxy once
/// per paragraph.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub paragraphs: usize,
    pub per_proxy: BTreeMap<String, ProxyStats>,
    pub occurrences: usize,
    pub resolved: usize,
    pub distinct: usize,
    pub distinct_resolved: usize,
    /// Unresolved linkers per paragraph by paragraph id.
    pub unresolved_by_paragraph: BTreeMap<String, Vec<String>>,
}

impl ResolutionReport {
    pub fn add(&mut self, paragraph_id: &str, res: &Resolution) {
        self.paragraphs += 1;
        let mut seen: BTreeMap<&str, bool> = BTreeMap::new();
        for (p, _) in &res.resolved {
            let s = self.per_proxy.entry(p.clone()).or_default();
            s.occurrences += 1;
            s.resolved += 1;
            seen.insert(p, true);
        }
        for p in &res.unresolved {
            self.per_proxy.entry(p.clone()).or_default().occurrences += 1;
            seen.entry(p).or_insert(false);
        }
        self.occurrences += res.resolved.len() + res.unresolved.len();
        self.resolved += res.resolved.len();
        self.distinct += seen.len();
        self.distinct_resolved += seen.values().filter(|r| **r).count();
        if !res.unresolved.is_empty() {
            self.unresolved_by_paragraph.insert(paragraph_id.to_string(), res.unresolved.clone());
        }
    }

    /// Resolved share of proxy occurrences; `None` without occurrences.
    pub fn occurrence_rate(&self) -> Option<f64> {
        (self.occurrences > 0).then(|| self.resolved as f64 / self.occurrences as f64)
    }

    pub fn distinct_rate(&self) -> Option<f64> {
        (self.distinct > 0).then(|| self.distinct_resolved as f64 / self.distinct as f64)
    }

    /// Unresolved proxy occurrences divided by paragraphs processed.
    pub fn unresolved_per_paragraph(&self) -> Option<f64> {
        (self.paragraphs > 0).then(|| (self.occurrences - self.resolved) as f64 / self.paragraphs as f64)
    }

    /// Rows sorted by occurrences (descending), then proxy.
    pub fn rows(&self) -> Vec<(&str, ProxyStats)> {
        let mut rows: Vec<_> = self.per_proxy.iter().map(|(p, s)| (p.as_str(), *s)).collect();
        rows.sort_by(|a, b| b.1.occurrences.cmp(&a.1.occurrences).then(a.0.cmp(b.0)));
        rows
    }

    /// Markdown table: proxy, occurrences, resolved, resolution rate.
    pub fn render_table(&self) -> String {
        let mut s = String::from("| Proxy | Occurrences | Resolved | Resolution rate |\n|---|---:|---:|---:|\n");
        for (p, st) in self.rows() {
            let rate = st.resolved as f64 / st.occurrences as f64 * 100.0;
            writeln!(s, "| {p} | {} | {} | {rate:.1}% |", st.occurrences, st.resolved).unwrap();
        }
        s
    }

    pub fn unresolved_proxies(&self) -> BTreeSet<&str> {
        self.unresolved_by_paragraph.values().flatten().map(String::as_str).collect()
    }
}

//! Per-paragraph extraction: retrieve shots, assemble the prompt, call the
//! gateway, parse the answer into a [`SynthesisRecord`].

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llmgate::{fingerprint, ChatRequest, Gateway, LlmError};
use crate::promptkit::{assemble, repair_instruction, AssembledPrompt, Knowledge, PromptError, PromptTemplate, Shot, ShotOrdering};
use crate::record::{Slot, SynthesisRecord};
use crate::retrieval::{random_select, top_k, DemonstrationPool, RetrievalAlgo, RetrievalError, ScoredDemo, Scorer};

/// Values a model uses to say "not stated"; all map to an absent slot.
pub const NULL_MARKERS: [&str; 10] =
    ["", "null", "none", "n/a", "na", "nil", "-", "not mentioned", "not specified", "not stated"];

pub fn is_null_marker(value: &str) -> bool {
    let v = value.trim().to_lowercase();
    NULL_MARKERS.contains(&v.as_str())
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("few-shot extraction needs a non-empty demonstration pool")]
    NoPool,
    #[error("few-shot extraction with {0:?} needs a scorer")]
    NoScorer(RetrievalAlgo),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("demonstration `{0}` referenced by a result is not in the pool")]
    UnknownShot(String),
}

#[derive(Debug, Error, PartialEq)]
#[error("unparseable output: {0}")]
pub struct ParseError(pub String);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedOutput {
    pub record: SynthesisRecord,
    pub diagnostics: Vec<String>,
}

fn slot_for_key(key: &str) -> Option<Slot> {
    let k: String = key
        .trim()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
        .collect();
    Slot::from_key(&k)
}

fn value_text(key: &str, v: &Value, diagnostics: &mut Vec<String>) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => (!is_null_marker(s)).then(|| s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(_) | Value::Object(_) => {
            diagnostics.push(format!("unsupported value for {key}: dropped"));
            None
        }
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(|i| value_text(key, i, diagnostics)).collect();
            if parts.is_empty() {
                return None;
            }
            diagnostics.push(format!("list value for {key}: joined"));
            Some(parts.join(", "))
        }
    }
}

/// First JSON object, or array holding an object, embedded anywhere in `raw`.
pub fn locate_json(raw: &str) -> Option<Value> {
    raw.char_indices().filter(|(_, c)| *c == '{' || *c == '[').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(v @ Value::Object(_))) => Some(v),
            // Citation brackets like `[12]` are not records.
            Some(Ok(Value::Array(items))) if items.iter().any(Value::is_object) => Some(Value::Array(items)),
            _ => None,
        }
    })
}

/// Tolerant parse of model output.
///
/// The first JSON object (or list of objects) anywhere in the text is used;
/// surrounding prose and code fences are ignored. For a list only the first
/// record is kept. Keys outside the ten slots are ignored with a
/// diagnostic; missing keys and null markers become absent slots.
pub fn parse_output(raw: &str) -> Result<ParsedOutput, ParseError> {
    let value = locate_json(raw).ok_or_else(|| ParseError("no JSON object found".into()))?;
    let mut diagnostics = Vec::new();
    let object = match value {
        Value::Object(o) => o,
        Value::Array(items) => {
            let n = items.len();
            let first = items.into_iter().find_map(|v| match v {
                Value::Object(o) => Some(o),
                _ => None,
            });
            let first = first.ok_or_else(|| ParseError("list contains no object".into()))?;
            if n > 1 {
                diagnostics.push(format!("multiple records ({n}): kept the first"));
            }
            first
        }
        _ => unreachable!("locate_json returns objects or arrays"),
    };
    let mut record = SynthesisRecord::new();
    for (key, v) in &object {
        match slot_for_key(key) {
            Some(slot) => record.set(slot, value_text(slot.key(), v, &mut diagnostics)),
            None => diagnostics.push(format!("unknown field: {key}")),
        }
    }
    Ok(ParsedOutput { record, diagnostics })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    Zero,
    #[default]
    Few,
}

impl std::str::FromStr for ExtractionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero" => Ok(ExtractionMode::Zero),
            "few" => Ok(ExtractionMode::Few),
            other => Err(format!("unknown mode `{other}` (zero|few)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub mode: ExtractionMode,
    pub k: usize,
    pub algo: RetrievalAlgo,
    pub ordering: ShotOrdering,
    pub knowledge: Knowledge,
    pub model: String,
    pub max_output_tokens: u32,
    /// Base seed for random retrieval; mixed with the paragraph id.
    pub seed: u64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            mode: ExtractionMode::Few,
            k: 4,
            algo: RetrievalAlgo::Bm25,
            ordering: ShotOrdering::default(),
            knowledge: Knowledge::default(),
            model: "gpt-4-turbo".into(),
            max_output_tokens: 1024,
            seed: 0,
        }
    }
}

impl ExtractConfig {
    pub fn zero_shot() -> Self {
        ExtractConfig { mode: ExtractionMode::Zero, k: 0, ..Default::default() }
    }

    pub fn few_shot(k: usize, algo: RetrievalAlgo) -> Self {
        ExtractConfig { k, algo, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub paragraph_id: String,
    pub record: SynthesisRecord,
    pub mode: ExtractionMode,
    pub k: usize,
    /// `None` in zero-shot mode.
    pub algo: Option<RetrievalAlgo>,
    pub ordering: ShotOrdering,
    pub knowledge: Knowledge,
    pub model: String,
    pub max_output_tokens: u32,
    pub template_version: String,
    /// Retrieval output in rank order.
    pub retrieved: Vec<ScoredDemo>,
    /// Demonstration ids in prompt order.
    pub shot_ids: Vec<String>,
    /// Fingerprint of the first request sent.
    pub prompt_fingerprint: String,
    pub raw_text: String,
    pub repaired: bool,
    pub unparseable: bool,
    pub diagnostics: Vec<String>,
}

/// Per-paragraph seed derived from the base seed and paragraph id.
pub fn paragraph_seed(seed: u64, paragraph_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(paragraph_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn shots_from(pool: &DemonstrationPool, retrieved: &[ScoredDemo]) -> Result<Vec<Shot>, ExtractError> {
    retrieved
        .iter()
        .map(|s| {
            let pos = pool.position(&s.demo_id).ok_or_else(|| ExtractError::UnknownShot(s.demo_id.clone()))?;
            let d = &pool.entries()[pos];
            Ok(Shot { id: d.id.clone(), paragraph: d.paragraph.clone(), gold: Some(d.gold.clone()), rank: s.rank, pool_position: pos })
        })
        .collect()
}

pub struct Extractor<'a> {
    pub template: &'a PromptTemplate,
    pub gateway: &'a Gateway,
    pub pool: Option<&'a DemonstrationPool>,
    pub scorer: Option<&'a dyn Scorer>,
}

impl<'a> Extractor<'a> {
    pub fn new(template: &'a PromptTemplate, gateway: &'a Gateway) -> Self {
        Extractor { template, gateway, pool: None, scorer: None }
    }

    pub fn with_pool(mut self, pool: &'a DemonstrationPool, scorer: Option<&'a dyn Scorer>) -> Self {
        self.pool = Some(pool);
        self.scorer = scorer;
        self
    }

    fn retrieve(&self, paragraph_id: &str, text: &str, cfg: &ExtractConfig) -> Result<Vec<ScoredDemo>, ExtractError> {
        if cfg.mode == ExtractionMode::Zero || cfg.k == 0 {
            return Ok(Vec::new());
        }
        let pool = self.pool.filter(|p| !p.is_empty()).ok_or(ExtractError::NoPool)?;
        Ok(match cfg.algo {
            RetrievalAlgo::Random => random_select(pool, cfg.k, paragraph_seed(cfg.seed, paragraph_id), Some(paragraph_id)),
            algo => {
                let scorer = self.scorer.ok_or(ExtractError::NoScorer(algo))?;
                top_k(scorer, pool, text, cfg.k, Some(paragraph_id))?
            }
        })
    }

    fn request(&self, prompt: &AssembledPrompt, cfg: &ExtractConfig) -> ChatRequest {
        let mut req = ChatRequest::new(&cfg.model, &prompt.system, &prompt.user);
        req.max_output_tokens = cfg.max_output_tokens;
        req
    }

    pub fn extract(&self, paragraph_id: &str, text: &str, cfg: &ExtractConfig) -> Result<ExtractionResult, ExtractError> {
        let retrieved = self.retrieve(paragraph_id, text, cfg)?;
        let shots = match self.pool {
            Some(pool) => shots_from(pool, &retrieved)?,
            None => Vec::new(),
        };
        let prompt = assemble(self.template, &shots, cfg.ordering, text, cfg.knowledge)?;
        let req = self.request(&prompt, cfg);
        let prompt_fingerprint = fingerprint(&req);
        let first = self.gateway.complete(&req)?;

        let mut raw_text = first.text;
        let mut repaired = false;
        let mut unparseable = false;
        let mut diagnostics = Vec::new();
        let record = match parse_output(&raw_text) {
            Ok(p) => {
                diagnostics = p.diagnostics;
                p.record
            }
            Err(first_err) => {
                let mut repair = req.clone();
                repair.user = format!("{}\n{}", prompt.user, repair_instruction(self.template, &raw_text));
                let second = self.gateway.complete(&repair)?;
                repaired = true;
                diagnostics.push(format!("repair round: {first_err}"));
                raw_text = second.text;
                match parse_output(&raw_text) {
                    Ok(p) => {
                        diagnostics.extend(p.diagnostics);
                        p.record
                    }
                    Err(e) => {
                        unparseable = true;
                        diagnostics.push(e.to_string());
                        SynthesisRecord::new()
                    }
                }
            }
        };
        let zero = cfg.mode == ExtractionMode::Zero;
        Ok(ExtractionResult {
            paragraph_id: paragraph_id.to_string(),
            record,
            mode: cfg.mode,
            k: if zero { 0 } else { cfg.k },
            algo: (!zero).then_some(cfg.algo),
            ordering: cfg.ordering,
            knowledge: cfg.knowledge,
            model: cfg.model.clone(),
            max_output_tokens: cfg.max_output_tokens,
            template_version: self.template.version.clone(),
            retrieved,
            shot_ids: prompt.shot_ids,
            prompt_fingerprint,
            raw_text,
            repaired,
            unparseable,
            diagnostics,
        })
    }

    /// Extracts many paragraphs with up to `parallelism` worker threads.
    /// Results come back in input order.
    pub fn extract_all(
        &self,
        paragraphs: &[(String, String)],
        cfg: &ExtractConfig,
        parallelism: usize,
    ) -> Vec<Result<ExtractionResult, ExtractError>> {
        let workers = parallelism.max(1).min(paragraphs.len().max(1));
        let chunk = paragraphs.len().div_ceil(workers).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> = paragraphs
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|(id, text)| self.extract(id, text, cfg)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("extraction worker panicked")).collect()
        })
    }
}

/// Rebuilds the exact first prompt of a stored result from the pool and
/// template; the fingerprint of the rebuilt request equals the stored one.
pub fn rebuild_prompt(
    result: &ExtractionResult,
    template: &PromptTemplate,
    pool: &DemonstrationPool,
    query_text: &str,
) -> Result<(AssembledPrompt, String), ExtractError> {
    let shots = shots_from(pool, &result.retrieved)?;
    let prompt = assemble(template, &shots, result.ordering, query_text, result.knowledge)?;
    let mut req = ChatRequest::new(&result.model, &prompt.system, &prompt.user);
    req.max_output_tokens = result.max_output_tokens;
    let fp = fingerprint(&req);
    Ok((prompt, fp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmgate::{ChatResponse, ScriptedProvider};
    use crate::retrieval::{Bm25Scorer, Demonstration};

    const FULL: &str = r#"{"metal_precursor_name":"Zn(NO3)2·6H2O","metal_precursor_amount":"0.5 mmol",
        "organic_linker_name":"H2BDC","organic_linker_amount":"0.5 mmol","solvent_name":"DMF",
        "solvent_amount":"10 mL","modulator_name":null,"modulator_amount":null,
        "reaction_duration":"24 h","reaction_temperature":"120 °C"}"#;

    #[test]
    fn parses_full_record() {
        let p = parse_output(FULL).unwrap();
        assert_eq!(p.record.filled(), 8);
        assert_eq!(p.record.get(Slot::ReactionTemperature), Some("120 °C"));
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn wrapper_prose_is_stripped() {
        let wrapped = format!("Here is the extraction: {FULL}\nLet me know if you need more.");
        assert_eq!(parse_output(&wrapped).unwrap(), parse_output(FULL).unwrap());
        let fenced = format!("```json\n{FULL}\n```");
        assert_eq!(parse_output(&fenced).unwrap().record, parse_output(FULL).unwrap().record);
    }

    #[test]
    fn unknown_fields_and_markers() {
        let p = parse_output(r#"{"catalyst":"Pd","solvent_name":"N/A","Reaction Duration":"3 days","solvent_amount":5}"#)
            .unwrap();
        assert_eq!(p.diagnostics, ["unknown field: catalyst"]);
        assert_eq!(p.record.get(Slot::SolventName), None);
        assert_eq!(p.record.get(Slot::ReactionDuration), Some("3 days"));
        assert_eq!(p.record.get(Slot::SolventAmount), Some("5"));
    }

    #[test]
    fn list_form_keeps_first() {
        let p = parse_output(r#"[{"solvent_name":"DMF"},{"solvent_name":"water"}]"#).unwrap();
        assert_eq!(p.record.get(Slot::SolventName), Some("DMF"));
        assert_eq!(p.diagnostics, ["multiple records (2): kept the first"]);
    }

    #[test]
    fn no_object_is_an_error() {
        assert!(parse_output("I could not find any conditions.").is_err());
        assert!(parse_output("[1, 2]").is_err());
        let cited = format!("As reported [12], the answer is {FULL}");
        assert_eq!(parse_output(&cited).unwrap().record.filled(), 8);
    }

    fn pool() -> DemonstrationPool {
        DemonstrationPool::new(
            (0..6)
                .map(|i| {
                    Demonstration::finalized(
                        &format!("p{i}"),
                        &format!("zinc nitrate {i} dissolved in DMF heated {i}"),
                        SynthesisRecord::new().with(Slot::SolventName, "DMF"),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn few_shot_excludes_query_and_records_provenance() {
        let pool = pool();
        let gw = Gateway::live(ScriptedProvider::new(vec![Ok(ChatResponse::text(FULL, 10, 5))]));
        let t = PromptTemplate::default_template();
        let scorer = Bm25Scorer::default();
        let ex = Extractor::new(&t, &gw).with_pool(&pool, Some(&scorer));
        let cfg = ExtractConfig::few_shot(4, RetrievalAlgo::Bm25);
        let r = ex.extract("p2", &pool.get("p2").unwrap().paragraph, &cfg).unwrap();
        assert_eq!(r.shot_ids.len(), 4);
        assert!(!r.shot_ids.contains(&"p2".to_string()));
        let (_, fp) = rebuild_prompt(&r, &t, &pool, &pool.get("p2").unwrap().paragraph).unwrap();
        assert_eq!(fp, r.prompt_fingerprint);
    }

    #[test]
    fn zero_shot_has_no_shots() {
        let gw = Gateway::live(ScriptedProvider::new(vec![Ok(ChatResponse::text(FULL, 10, 5))]));
        let t = PromptTemplate::default_template();
        let r = Extractor::new(&t, &gw).extract("q", "text", &ExtractConfig::zero_shot()).unwrap();
        assert_eq!((r.k, r.algo, r.shot_ids.len()), (0, None, 0));
    }

    #[test]
    fn repair_round_then_flag() {
        let t = PromptTemplate::default_template();
        let gw = Gateway::live(ScriptedProvider::new(vec![
            Ok(ChatResponse::text("sorry", 1, 1)),
            Ok(ChatResponse::text(FULL, 1, 1)),
        ]));
        let r = Extractor::new(&t, &gw).extract("q", "text", &ExtractConfig::zero_shot()).unwrap();
        assert!(r.repaired && !r.unparseable);
        assert_eq!(r.record.filled(), 8);

        let gw = Gateway::live(ScriptedProvider::new(vec![Ok(ChatResponse::text("still no object", 1, 1))]));
        let r = Extractor::new(&t, &gw).extract("q", "text", &ExtractConfig::zero_shot()).unwrap();
        assert!(r.repaired && r.unparseable);
        assert!(r.record.is_empty());
        assert_eq!(gw.ledger().requests, 2);
    }

    #[test]
    fn few_shot_without_pool_errors() {
        let t = PromptTemplate::default_template();
        let gw = Gateway::live(ScriptedProvider::new(vec![Ok(ChatResponse::text(FULL, 1, 1))]));
        assert!(matches!(
            Extractor::new(&t, &gw).extract("q", "x", &ExtractConfig::default()),
            Err(ExtractError::NoPool)
        ));
    }
}

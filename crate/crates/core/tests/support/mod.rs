//! Shared fixtures for the integration tests.
//!
//! `FixtureOracle` is a deterministic stand-in for the chat model. It
//! answers extraction prompts from `answers.json`, anaphor prompts from
//! `anaphors.json` and synonym prompts from a fixed table. It is only used
//! to record `cassette.json` (`SYNTHEX_RECORD=1`); normal runs replay.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde_json::Value;
use synthex::coref::HARVEST_SYSTEM;
use synthex::corpus::ingest;
use synthex::detector::{train, DetectorModel, LabeledParagraph, TrainConfig};
use synthex::llmgate::{Cassette, ChatProvider, ChatRequest, ChatResponse, Gateway, ProviderError};
use synthex::normalize::{GROUP_SYSTEM, REFLECT_SYSTEM};
use synthex::promptkit::estimate_tokens;
use synthex::retrieval::{Demonstration, DemonstrationPool};
use synthex::store::{self, GoldDb, PoolDb};
use synthex::{Slot, SynthesisRecord};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn detector_samples() -> Vec<LabeledParagraph> {
    read("detector/samples.jsonl").lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

pub fn detector_model() -> DetectorModel {
    train(&detector_samples(), &TrainConfig::default()).unwrap()
}

pub fn pipeline_pool() -> DemonstrationPool {
    store::load::<PoolDb>(fixture("pipeline/pool.db")).unwrap().pool
}

pub fn pipeline_gold() -> BTreeMap<String, SynthesisRecord> {
    store::load::<GoldDb>(fixture("pipeline/gold.db")).unwrap().gold
}

/// The query paragraph of an extraction prompt: the text after the last
/// `Context:` header.
pub fn query_of(user: &str) -> &str {
    let start = user.rfind("Context:\n").map_or(0, |i| i + "Context:\n".len());
    let rest = &user[start..];
    rest.split("\n\n").next().unwrap_or(rest)
}

/// Paragraphs of the shots in an extraction prompt.
pub fn shots_of(user: &str) -> Vec<&str> {
    user.split("\nContext:\n")
        .skip(1)
        .filter_map(|chunk| chunk.split_once("\nCompletion:\n").map(|(p, _)| p))
        .collect()
}

fn reply(req: &ChatRequest, text: String) -> Result<ChatResponse, ProviderError> {
    let prompt = estimate_tokens(&req.system) + estimate_tokens(&req.user);
    Ok(ChatResponse::text(&text, prompt as u64, estimate_tokens(&text) as u64))
}

pub struct FixtureOracle {
    answers: BTreeMap<String, (String, Option<String>)>,
    anaphors: Vec<(String, String)>,
    synonyms: Vec<BTreeSet<String>>,
}

impl FixtureOracle {
    pub fn load() -> Self {
        let corpus = ingest(read("pipeline/corpus.jsonl").as_bytes()).unwrap();
        let raw: BTreeMap<String, Value> = serde_json::from_str(&read("pipeline/answers.json")).unwrap();
        let answers = raw
            .into_iter()
            .map(|(id, v)| {
                let text = corpus.paragraph(&id).unwrap_or_else(|| panic!("{id}")).text.clone();
                let first = v["first"].as_str().unwrap().to_string();
                let repair = v.get("repair").and_then(Value::as_str).map(str::to_string);
                (text, (first, repair))
            })
            .collect();
        let defs: Vec<Value> = serde_json::from_str(&read("pipeline/anaphors.json")).unwrap();
        let anaphors = defs
            .iter()
            .map(|d| (d["proxy"].as_str().unwrap().to_string(), d["name"].as_str().unwrap().to_string()))
            .collect();
        let synonyms = vec![
            ["DMF", "N,N-dimethylformamide", "dimethylformamide"].iter().map(|s| s.to_string()).collect(),
            ["water", "H2O", "deionized water"].iter().map(|s| s.to_string()).collect(),
        ];
        FixtureOracle { answers, anaphors, synonyms }
    }

    fn group(&self, names: Vec<String>) -> Vec<Vec<String>> {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for n in names {
            let key = self.synonyms.iter().find(|g| g.contains(&n)).map_or(n.clone(), |g| g.iter().next().unwrap().clone());
            groups.entry(key).or_default().push(n);
        }
        groups.into_values().collect()
    }
}

impl ChatProvider for FixtureOracle {
    fn name(&self) -> &str {
        "fixture-oracle"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        if req.system == HARVEST_SYSTEM {
            let found: serde_json::Map<String, Value> = self
                .anaphors
                .iter()
                .filter(|(p, n)| req.user.contains(&format!("{n} ({p})")))
                .map(|(p, n)| (p.clone(), Value::String(n.clone())))
                .collect();
            return reply(req, Value::Object(found).to_string());
        }
        if req.system == GROUP_SYSTEM || req.system == REFLECT_SYSTEM {
            let start = req.user.find('[').ok_or_else(|| ProviderError::Fatal("no list".into()))?;
            let v: Value = serde_json::from_str(&req.user[start..]).map_err(|e| ProviderError::Fatal(e.to_string()))?;
            let names: Vec<String> = match v {
                Value::Array(items) => items
                    .into_iter()
                    .flat_map(|i| match i {
                        Value::Array(g) => g.into_iter().filter_map(|x| x.as_str().map(str::to_string)).collect(),
                        Value::String(s) => vec![s],
                        _ => vec![],
                    })
                    .collect(),
                _ => vec![],
            };
            return reply(req, serde_json::to_string(&self.group(names)).unwrap());
        }
        let query = query_of(&req.user);
        let (first, repair) =
            self.answers.get(query).ok_or_else(|| ProviderError::Fatal(format!("no answer for `{query}`")))?;
        let text = if req.user.contains("Your previous answer could not be read") {
            repair.clone().unwrap_or_else(|| first.clone())
        } else {
            first.clone()
        };
        reply(req, text)
    }
}

pub fn recording() -> bool {
    std::env::var("SYNTHEX_RECORD").is_ok_and(|v| v == "1")
}

/// Replay gateway over the committed cassette, or a recording gateway in
/// front of the oracle when `SYNTHEX_RECORD=1`.
pub fn pipeline_gateway() -> Gateway {
    let path = fixture("pipeline/cassette.json");
    if recording() {
        let existing = Cassette::load(&path).unwrap_or_default();
        Gateway::record(FixtureOracle::load(), existing)
    } else {
        Gateway::replay(Cassette::load(&path).expect("committed cassette; record with SYNTHEX_RECORD=1"))
    }
}

pub fn save_recording(gw: &Gateway) {
    if recording() {
        gw.cassette().unwrap().save(&fixture("pipeline/cassette.json")).unwrap();
    }
}

/// Four families of six paragraphs; each family shares reagents and a
/// distinctive procedure phrase, so lexical retrieval finds siblings.
pub fn family_pool() -> DemonstrationPool {
    let families = [
        ("ZnCl2", "H2bdc", "DMF", "under a nitrogen blanket in a sealed glass ampoule"),
        ("CuSO4·5H2O", "H3btc", "ethanol", "with slow vapour diffusion through a layered tube"),
        ("ZrOCl2·8H2O", "H2fum", "formic acid", "inside a microwave reactor with magnetic stirring"),
        ("Co(OAc)2·4H2O", "H2pzdc", "acetonitrile", "by sonication followed by gentle solvothermal treatment"),
    ];
    let mut entries = Vec::new();
    for (f, (m, l, s, phrase)) in families.iter().enumerate() {
        for i in 0..6 {
            let a = format!("{}.{} mmol", 1 + i, f);
            let b = format!("{}.{}5 mmol", i, f);
            let v = format!("{} mL", 5 + 3 * i);
            let t = format!("{} °C", 80 + 10 * i + f);
            let h = format!("{} h", 12 * (i + 1));
            let text = format!("{m} ({a}) and {l} ({b}) were combined in {s} ({v}) {phrase} and held at {t} for {h}.");
            let gold = SynthesisRecord::new()
                .with(Slot::MetalPrecursorName, *m)
                .with(Slot::MetalPrecursorAmount, a)
                .with(Slot::OrganicLinkerName, *l)
                .with(Slot::OrganicLinkerAmount, b)
                .with(Slot::SolventName, *s)
                .with(Slot::SolventAmount, v)
                .with(Slot::ReactionDuration, h)
                .with(Slot::ReactionTemperature, t);
            entries.push(Demonstration::finalized(&format!("fam{f}-{i}"), &text, gold));
        }
    }
    DemonstrationPool::new(entries).unwrap()
}

/// Mock model whose answer quality grows with shot relevance: it gets
/// `2 + 2 × relevant` filled slots right (in slot order) and leaves the
/// rest empty. A shot is relevant when its metal precursor appears in the
/// query.
pub struct RelevanceMock {
    gold: BTreeMap<String, (SynthesisRecord, String)>,
}

impl RelevanceMock {
    pub fn new(pool: &DemonstrationPool) -> Self {
        let gold = pool
            .entries()
            .iter()
            .map(|d| (d.paragraph.trim().to_string(), (d.gold.clone(), d.gold.get(Slot::MetalPrecursorName).unwrap_or("").to_string())))
            .collect();
        RelevanceMock { gold }
    }
}

impl ChatProvider for RelevanceMock {
    fn name(&self) -> &str {
        "relevance-mock"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let query = query_of(&req.user);
        let (gold, _) = self.gold.get(query).ok_or_else(|| ProviderError::Fatal("unknown query".into()))?;
        let relevant = shots_of(&req.user)
            .iter()
            .filter(|p| self.gold.get(p.trim()).is_some_and(|(_, metal)| query.contains(metal.as_str())))
            .count();
        let budget = 2 + 2 * relevant;
        let mut out = SynthesisRecord::new();
        for (slot, v) in gold.iter().filter(|(_, v)| v.is_some()).take(budget) {
            out.set(slot, v.map(str::to_string));
        }
        reply(req, out.to_json())
    }
}

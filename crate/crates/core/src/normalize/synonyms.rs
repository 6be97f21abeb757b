use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::similarity::{pick_canonical, CanonicalMap, Cluster, MergeSource};
use super::Category;
use crate::llmgate::{ChatRequest, Gateway};

pub const GROUP_SYSTEM: &str = "You are given chemical substance names that appeared in synthesis records, \
one JSON string per name. Group names that denote the same substance. Answer with one JSON array; each \
element is an array of names taken verbatim from the input. Every input name appears in exactly one group.";

pub const REFLECT_SYSTEM: &str = "You are given a proposed grouping of chemical substance names. Check that \
the names inside each group denote the same substance and that no two groups denote the same substance. \
Split or join groups where needed. Answer with the corrected grouping as one JSON array of arrays of names, \
verbatim, each input name in exactly one group.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymOutcome {
    pub category: Category,
    pub map: CanonicalMap,
    /// Final partition of the names sent to the model (empty on fallback).
    pub groups: Vec<Vec<String>>,
    pub fallback: bool,
    pub diagnostics: Vec<String>,
}

fn group_request(model: &str, category: Category, names: &[String]) -> ChatRequest {
    let user = format!("Category: {}\nNames:\n{}", category.key(), serde_json::to_string_pretty(names).expect("infallible"));
    ChatRequest::new(model, GROUP_SYSTEM, &user)
}

fn reflect_request(model: &str, category: Category, groups: &[Vec<String>]) -> ChatRequest {
    let user =
        format!("Category: {}\nProposed grouping:\n{}", category.key(), serde_json::to_string_pretty(groups).expect("infallible"));
    ChatRequest::new(model, REFLECT_SYSTEM, &user)
}

fn first_array(raw: &str) -> Option<Value> {
    raw.char_indices().filter(|(_, c)| *c == '[').find_map(|(i, _)| {
        match serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>().next() {
            Some(Ok(v @ Value::Array(_))) => Some(v),
            _ => None,
        }
    })
}

/// Parses a grouping and checks it partitions `names`.
pub fn parse_partition(raw: &str, names: &BTreeSet<String>) -> Result<Vec<Vec<String>>, String> {
    let Some(Value::Array(items)) = first_array(raw) else {
        return Err("answer is not a JSON array".into());
    };
    let mut seen = BTreeSet::new();
    let mut groups = Vec::new();
    for item in items {
        let Value::Array(members) = item else { return Err("group is not an array".into()) };
        let mut group = Vec::new();
        for m in members {
            let Value::String(name) = m else { return Err("group member is not a string".into()) };
            if !names.contains(&name) {
                return Err(format!("unknown name `{name}`"));
            }
            if !seen.insert(name.clone()) {
                return Err(format!("name `{name}` appears twice"));
            }
            group.push(name);
        }
        if !group.is_empty() {
            group.sort();
            groups.push(group);
        }
    }
    if let Some(missing) = names.iter().find(|n| !seen.contains(*n)) {
        return Err(format!("name `{missing}` missing from grouping"));
    }
    groups.sort();
    Ok(groups)
}

/// Two-round LLM synonym merge on top of edit-distance clusters.
///
/// Only clusters whose total frequency reaches the category floor are sent
/// to the model (by canonical name); the rest pass through unchanged. Any
/// model failure falls back to the edit-distance clusters.
pub fn merge_synonyms_llm(
    gateway: &Gateway,
    model: &str,
    category: Category,
    clusters: &[Cluster],
    floor: usize,
) -> SynonymOutcome {
    let mut out = SynonymOutcome {
        category,
        map: CanonicalMap::from_clusters(clusters.to_vec()),
        groups: Vec::new(),
        fallback: false,
        diagnostics: Vec::new(),
    };
    let candidates: BTreeSet<String> =
        clusters.iter().filter(|c| c.frequency >= floor).map(|c| c.canonical.clone()).collect();
    if candidates.len() < 2 {
        return out;
    }
    let names: Vec<String> = candidates.iter().cloned().collect();
    let round = |req: ChatRequest| -> Result<Vec<Vec<String>>, String> {
        let resp = gateway.complete(&req).map_err(|e| e.to_string())?;
        parse_partition(&resp.text, &candidates)
    };
    let result = round(group_request(model, category, &names))
        .map_err(|e| format!("grouping round: {e}"))
        .and_then(|first| round(reflect_request(model, category, &first)).map_err(|e| format!("reflection round: {e}")));
    let groups = match result {
        Ok(g) => g,
        Err(e) => {
            out.fallback = true;
            out.diagnostics.push(format!("fell back to edit-distance clusters: {e}"));
            return out;
        }
    };

    let by_canonical: BTreeMap<&str, &Cluster> = clusters.iter().map(|c| (c.canonical.as_str(), c)).collect();
    let mut merged: Vec<Cluster> = clusters.iter().filter(|c| !candidates.contains(&c.canonical)).cloned().collect();
    for g in &groups {
        let parts: Vec<&Cluster> = g.iter().map(|n| by_canonical[n.as_str()]).collect();
        if parts.len() == 1 {
            merged.push(parts[0].clone());
            continue;
        }
        let totals: BTreeMap<String, usize> = parts.iter().map(|c| (c.canonical.clone(), c.frequency)).collect();
        let mut members: Vec<String> = parts.iter().flat_map(|c| c.members.iter().cloned()).collect();
        members.sort();
        merged.push(Cluster {
            canonical: pick_canonical(totals.keys(), &totals),
            frequency: totals.values().sum(),
            members,
            source: MergeSource::Llm,
        });
    }
    merged.sort_by(|a, b| a.canonical.cmp(&b.canonical));
    out.map = CanonicalMap::from_clusters(merged);
    out.groups = groups;
    out
}

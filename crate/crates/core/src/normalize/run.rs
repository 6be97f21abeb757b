use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::filter::{apply_frequency_filter, export_features, FeatureTable, FilterOutcome, FrequencyFilter};
use super::similarity::{cluster_by_threshold, CanonicalMap};
use super::synonyms::{merge_synonyms_llm, SynonymOutcome};
use super::units::clean_special_chars;
use super::{Category, NormalizeError};
use crate::llmgate::Gateway;
use crate::record::{Slot, SynthesisRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizeConfig {
    pub threshold: f64,
    pub filter: FrequencyFilter,
    /// Run the LLM synonym rounds on top of edit-distance clustering.
    pub merge_synonyms: bool,
    pub model: String,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        NormalizeConfig {
            threshold: super::DEFAULT_THRESHOLD,
            filter: FrequencyFilter::DEFAULT,
            merge_synonyms: true,
            model: "gpt-4-turbo".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizeReport {
    pub config: NormalizeConfig,
    pub maps: BTreeMap<Category, CanonicalMap>,
    pub synonyms: Vec<SynonymOutcome>,
    pub filter: FilterOutcome,
}

pub struct NormalizeOutcome {
    /// Every record, cleaned and mapped to canonical names.
    pub records: Vec<(String, SynthesisRecord)>,
    /// Records surviving the frequency filter.
    pub kept: Vec<(String, SynthesisRecord)>,
    pub features: FeatureTable,
    pub report: NormalizeReport,
}

/// Cleans every value; a value that cleans to nothing becomes absent.
pub fn clean_record(r: &SynthesisRecord) -> SynthesisRecord {
    let mut out = SynthesisRecord::new();
    for (slot, v) in r.iter() {
        out.set(slot, v.map(clean_special_chars).filter(|s| !s.is_empty()));
    }
    out
}

/// Clean → cluster → (optionally) merge synonyms → canonicalize → filter →
/// export. Without a gateway the synonym rounds are skipped.
pub fn normalize_records(
    records: &[(String, SynthesisRecord)],
    gateway: Option<&Gateway>,
    config: &NormalizeConfig,
) -> Result<NormalizeOutcome, NormalizeError> {
    let cleaned: Vec<(String, SynthesisRecord)> = records.iter().map(|(id, r)| (id.clone(), clean_record(r))).collect();
    let mut maps = BTreeMap::new();
    let mut synonyms = Vec::new();
    for c in Category::ALL {
        let clusters = cluster_by_threshold(cleaned.iter().filter_map(|(_, r)| r.get(c.slot())), config.threshold)?;
        let map = match gateway.filter(|_| config.merge_synonyms) {
            Some(gw) => {
                let out = merge_synonyms_llm(gw, &config.model, c, &clusters, c.merge_floor());
                let m = out.map.clone();
                synonyms.push(out);
                m
            }
            None => CanonicalMap::from_clusters(clusters),
        };
        maps.insert(c, map);
    }
    let canonical: Vec<(String, SynthesisRecord)> = cleaned
        .into_iter()
        .map(|(id, mut r)| {
            for c in Category::ALL {
                let slot: Slot = c.slot();
                let mapped = r.get(slot).map(|v| maps[&c].canonical(v).to_string());
                r.set(slot, mapped);
            }
            (id, r)
        })
        .collect();
    let plain: Vec<SynthesisRecord> = canonical.iter().map(|(_, r)| r.clone()).collect();
    let filter = apply_frequency_filter(&plain, config.filter);
    let kept: Vec<(String, SynthesisRecord)> = filter.kept.iter().map(|&i| canonical[i].clone()).collect();
    let features = export_features(&kept);
    Ok(NormalizeOutcome {
        records: canonical,
        kept,
        features,
        report: NormalizeReport { config: config.clone(), maps, synonyms, filter },
    })
}

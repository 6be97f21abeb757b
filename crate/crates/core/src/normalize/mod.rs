//! Post-processing of extracted conditions: name disambiguation by edit
//! distance, LLM synonym merging with a reflection round, unit
//! standardization, cleaning, frequency filtering and feature export.

mod filter;
mod run;
mod similarity;
mod synonyms;
mod units;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{
    apply_frequency_filter, export_features, frequency_table, Column, ColumnSpec, FeatureManifest, FeatureTable,
    FilterOutcome, FrequencyFilter, FrequencyTable,
};
pub use run::{clean_record, normalize_records, NormalizeConfig, NormalizeOutcome, NormalizeReport};
pub use similarity::{
    cluster_by_threshold, count_names, levenshtein, meets_threshold, similarity_ratio, CanonicalMap, Cluster,
    MergeSource, DEFAULT_THRESHOLD,
};
pub use synonyms::{merge_synonyms_llm, parse_partition, SynonymOutcome, GROUP_SYSTEM, REFLECT_SYSTEM};
pub use units::{
    clean_special_chars, standardize_temperature, standardize_time, Unit, UnitValue, EDGE_PUNCTUATION, INVISIBLE,
    OVERNIGHT_HOURS, ROOM_TEMPERATURE_C, SPACE_LIKE,
};

use crate::record::Slot;

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("threshold {0} outside (0, 100]")]
    Threshold(f64),
    #[error("cannot standardize `{0}`")]
    Unparseable(String),
    #[error("frequency filter: {0}")]
    Filter(String),
}

/// Name categories subject to merging and filtering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Metal,
    Linker,
    Solvent,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Metal, Category::Linker, Category::Solvent];

    pub fn key(self) -> &'static str {
        match self {
            Category::Metal => "metal",
            Category::Linker => "linker",
            Category::Solvent => "solvent",
        }
    }

    pub fn slot(self) -> Slot {
        match self {
            Category::Metal => Slot::MetalPrecursorName,
            Category::Linker => Slot::OrganicLinkerName,
            Category::Solvent => Slot::SolventName,
        }
    }

    /// Minimum frequency for a name to be sent to synonym merging.
    pub fn merge_floor(self) -> usize {
        match self {
            Category::Metal => 8,
            Category::Linker => 4,
            Category::Solvent => 5,
        }
    }
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::units::{standardize_temperature, standardize_time};
use super::{Category, NormalizeError};
use crate::record::{Slot, SynthesisRecord};

/// Top-N cutoffs per category; `None` means unlimited.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyFilter {
    pub metal: Option<usize>,
    pub linker: Option<usize>,
    pub solvent: Option<usize>,
}

impl FrequencyFilter {
    pub const DEFAULT: FrequencyFilter = FrequencyFilter { metal: Some(100), linker: Some(135), solvent: Some(20) };
    pub const UNLIMITED: FrequencyFilter = FrequencyFilter { metal: None, linker: None, solvent: None };

    pub fn new(metal: Option<usize>, linker: Option<usize>, solvent: Option<usize>) -> Result<Self, NormalizeError> {
        if [metal, linker, solvent].contains(&Some(0)) {
            return Err(NormalizeError::Filter("cutoffs must be positive".into()));
        }
        Ok(FrequencyFilter { metal, linker, solvent })
    }

    pub fn cutoff(&self, c: Category) -> Option<usize> {
        match c {
            Category::Metal => self.metal,
            Category::Linker => self.linker,
            Category::Solvent => self.solvent,
        }
    }
}

impl Default for FrequencyFilter {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl std::str::FromStr for FrequencyFilter {
    type Err = NormalizeError;

    /// `"100,135,20"`; `inf` or `*` for an unlimited cutoff.
    fn from_str(s: &str) -> Result<Self, NormalizeError> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(NormalizeError::Filter(format!("expected three cutoffs, got `{s}`")));
        }
        let parse = |p: &str| -> Result<Option<usize>, NormalizeError> {
            match p {
                "inf" | "*" | "∞" => Ok(None),
                n => n.parse().map(Some).map_err(|_| NormalizeError::Filter(format!("bad cutoff `{n}`"))),
            }
        };
        FrequencyFilter::new(parse(parts[0])?, parse(parts[1])?, parse(parts[2])?)
    }
}

/// Names ranked by count (descending), ties by name.
pub type FrequencyTable = Vec<(String, usize)>;

pub fn frequency_table<'a>(values: impl IntoIterator<Item = &'a str>) -> FrequencyTable {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut t: FrequencyTable = counts.into_iter().map(|(n, c)| (n.to_string(), c)).collect();
    t.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    t
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOutcome {
    /// Indices into the input that survive every cutoff.
    pub kept: Vec<usize>,
    pub tables: BTreeMap<Category, FrequencyTable>,
}

/// Keeps records whose metal, linker and solvent names are all within the
/// top-N of their category. A record lacking a name fails a finite cutoff;
/// unlimited cutoffs accept anything.
pub fn apply_frequency_filter(records: &[SynthesisRecord], filter: FrequencyFilter) -> FilterOutcome {
    let mut tables = BTreeMap::new();
    let mut allowed: BTreeMap<Category, Option<BTreeSet<String>>> = BTreeMap::new();
    for c in Category::ALL {
        let table = frequency_table(records.iter().filter_map(|r| r.get(c.slot())));
        allowed.insert(c, filter.cutoff(c).map(|n| table.iter().take(n).map(|(name, _)| name.clone()).collect()));
        tables.insert(c, table);
    }
    let kept = records
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            Category::ALL.iter().all(|c| match &allowed[c] {
                None => true,
                Some(top) => r.get(c.slot()).is_some_and(|v| top.contains(v)),
            })
        })
        .map(|(i, _)| i)
        .collect();
    FilterOutcome { kept, tables }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSpec {
    Id,
    Indicator { category: Category, value: String },
    Numeric { slot: Slot, unit: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub spec: ColumnSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub version: u32,
    pub columns: Vec<Column>,
    /// Per-row diagnostics for values that could not be standardized.
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureTable {
    pub manifest: FeatureManifest,
    pub rows: Vec<Vec<String>>,
}

impl FeatureTable {
    pub fn indicator_columns(&self) -> usize {
        self.manifest.columns.iter().filter(|c| matches!(c.spec, ColumnSpec::Indicator { .. })).count()
    }

    pub fn numeric_columns(&self) -> usize {
        self.manifest.columns.iter().filter(|c| matches!(c.spec, ColumnSpec::Numeric { .. })).count()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.manifest.columns.iter().map(|c| c.name.as_str())).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
    }

    pub fn manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.manifest).expect("infallible");
        s.push('\n');
        s
    }
}

fn number_cell(v: f64) -> String {
    format!("{v}")
}

/// One row per record: id, one 0/1 column per name present for each
/// category (ordered by frequency rank), then duration (h) and temperature
/// (°C). Missing or unparseable numbers are empty cells.
pub fn export_features(records: &[(String, SynthesisRecord)]) -> FeatureTable {
    let mut columns = vec![Column { name: "id".into(), spec: ColumnSpec::Id }];
    let mut indicators: Vec<(Category, String)> = Vec::new();
    for c in Category::ALL {
        for (name, _) in frequency_table(records.iter().filter_map(|(_, r)| r.get(c.slot()))) {
            columns.push(Column {
                name: format!("{}={}", c.key(), name),
                spec: ColumnSpec::Indicator { category: c, value: name.clone() },
            });
            indicators.push((c, name));
        }
    }
    columns.push(Column {
        name: "reaction_duration_h".into(),
        spec: ColumnSpec::Numeric { slot: Slot::ReactionDuration, unit: "h".into() },
    });
    columns.push(Column {
        name: "reaction_temperature_c".into(),
        spec: ColumnSpec::Numeric { slot: Slot::ReactionTemperature, unit: "°C".into() },
    });

    let mut diagnostics = Vec::new();
    let rows = records
        .iter()
        .map(|(id, r)| {
            let mut row = vec![id.clone()];
            for (c, name) in &indicators {
                row.push(if r.get(c.slot()) == Some(name.as_str()) { "1" } else { "0" }.into());
            }
            for (slot, f) in [
                (Slot::ReactionDuration, standardize_time as fn(&str) -> _),
                (Slot::ReactionTemperature, standardize_temperature),
            ] {
                let cell = match r.get(slot).map(f) {
                    None => String::new(),
                    Some(Ok(v)) => number_cell(v.magnitude),
                    Some(Err(e)) => {
                        diagnostics.push(format!("{id}: {}: {e}", slot.key()));
                        String::new()
                    }
                };
                row.push(cell);
            }
            row
        })
        .collect();
    FeatureTable { manifest: FeatureManifest { version: 1, columns, diagnostics }, rows }
}

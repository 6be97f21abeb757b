//! The ten synthesis-condition slots and the record that holds them.

use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One of the ten extracted conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    MetalPrecursorName,
    MetalPrecursorAmount,
    OrganicLinkerName,
    OrganicLinkerAmount,
    SolventName,
    SolventAmount,
    ModulatorName,
    ModulatorAmount,
    ReactionDuration,
    ReactionTemperature,
}

impl Slot {
    pub const ALL: [Slot; 10] = [
        Slot::MetalPrecursorName,
        Slot::MetalPrecursorAmount,
        Slot::OrganicLinkerName,
        Slot::OrganicLinkerAmount,
        Slot::SolventName,
        Slot::SolventAmount,
        Slot::ModulatorName,
        Slot::ModulatorAmount,
        Slot::ReactionDuration,
        Slot::ReactionTemperature,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Slot::MetalPrecursorName => "metal_precursor_name",
            Slot::MetalPrecursorAmount => "metal_precursor_amount",
            Slot::OrganicLinkerName => "organic_linker_name",
            Slot::OrganicLinkerAmount => "organic_linker_amount",
            Slot::SolventName => "solvent_name",
            Slot::SolventAmount => "solvent_amount",
            Slot::ModulatorName => "modulator_name",
            Slot::ModulatorAmount => "modulator_amount",
            Slot::ReactionDuration => "reaction_duration",
            Slot::ReactionTemperature => "reaction_temperature",
        }
    }

    pub fn from_key(key: &str) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.key() == key)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn group(self) -> ConditionGroup {
        match self {
            Slot::MetalPrecursorName | Slot::MetalPrecursorAmount => ConditionGroup::MetalPrecursor,
            Slot::OrganicLinkerName | Slot::OrganicLinkerAmount => ConditionGroup::OrganicLinker,
            Slot::SolventName | Slot::SolventAmount => ConditionGroup::Solvent,
            Slot::ModulatorName | Slot::ModulatorAmount => ConditionGroup::Modulator,
            Slot::ReactionDuration | Slot::ReactionTemperature => ConditionGroup::ReactionProcess,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// The five condition groups that background knowledge is written against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionGroup {
    MetalPrecursor,
    OrganicLinker,
    Solvent,
    Modulator,
    ReactionProcess,
}

impl ConditionGroup {
    pub const ALL: [ConditionGroup; 5] = [
        ConditionGroup::MetalPrecursor,
        ConditionGroup::OrganicLinker,
        ConditionGroup::Solvent,
        ConditionGroup::Modulator,
        ConditionGroup::ReactionProcess,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ConditionGroup::MetalPrecursor => "metal_precursor",
            ConditionGroup::OrganicLinker => "organic_linker",
            ConditionGroup::Solvent => "solvent",
            ConditionGroup::Modulator => "modulator",
            ConditionGroup::ReactionProcess => "reaction_process",
        }
    }

    pub fn from_key(key: &str) -> Option<ConditionGroup> {
        ConditionGroup::ALL.into_iter().find(|g| g.key() == key)
    }

    pub fn title(self) -> &'static str {
        match self {
            ConditionGroup::MetalPrecursor => "Metal precursor",
            ConditionGroup::OrganicLinker => "Organic linker",
            ConditionGroup::Solvent => "Solvent",
            ConditionGroup::Modulator => "Modulator",
            ConditionGroup::ReactionProcess => "Reaction process",
        }
    }
}

/// Extracted conditions for one paragraph.
///
/// Absence is explicit: a slot is either `None` or holds the raw string the
/// extractor returned. Amounts keep their original units. Serialized as a
/// JSON object listing all ten keys in slot order, with `null` for absent
/// slots.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SynthesisRecord {
    values: [Option<String>; 10],
}

impl SynthesisRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, slot: Slot) -> Option<&str> {
        self.values[slot.index()].as_deref()
    }

    pub fn set(&mut self, slot: Slot, value: Option<String>) {
        self.values[slot.index()] = value;
    }

    /// Builder-style setter.
    pub fn with(mut self, slot: Slot, value: impl Into<String>) -> Self {
        self.set(slot, Some(value.into()));
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (Slot, Option<&str>)> + '_ {
        Slot::ALL.into_iter().map(move |s| (s, self.get(s)))
    }

    pub fn filled(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.filled() == 0
    }

    /// Compact JSON form used in prompts and completions.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }
}

impl Serialize for SynthesisRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(10))?;
        for (slot, value) in self.iter() {
            map.serialize_entry(slot.key(), &value)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for SynthesisRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RecordVisitor;

        impl<'de> Visitor<'de> for RecordVisitor {
            type Value = SynthesisRecord;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object keyed by condition slot")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut record = SynthesisRecord::default();
                while let Some(key) = map.next_key::<String>()? {
                    let slot = Slot::from_key(&key).ok_or_else(|| {
                        serde::de::Error::custom(format!("unknown condition slot `{key}`"))
                    })?;
                    record.set(slot, map.next_value::<Option<String>>()?);
                }
                Ok(record)
            }
        }

        deserializer.deserialize_map(RecordVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_keys_round_trip() {
        for slot in Slot::ALL {
            assert_eq!(Slot::from_key(slot.key()), Some(slot));
        }
        assert_eq!(Slot::from_key("catalyst"), None);
        assert_eq!(ConditionGroup::ALL.len(), 5);
    }

    #[test]
    fn serializes_all_ten_slots_with_nulls() {
        let r = SynthesisRecord::new().with(Slot::SolventName, "DMF");
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 10);
        assert_eq!(obj["solvent_name"], "DMF");
        assert!(obj["metal_precursor_name"].is_null());
        let back: SynthesisRecord = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn strict_deserialization_rejects_unknown_slots() {
        assert!(serde_json::from_str::<SynthesisRecord>(r#"{"catalyst":"x"}"#).is_err());
    }
}

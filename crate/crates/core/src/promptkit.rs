//! Prompt assembly: background knowledge, ordered demonstrations, the query
//! paragraph and the output schema.
//!
//! Templates are versioned text files split into `[name]` sections:
//! `task`, `definition.<group>` for each of the five condition groups,
//! `constraint.<group>.<kind>` (any number), and `format`. The shipped
//! default is embedded at compile time.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{ConditionGroup, Slot, SynthesisRecord};

pub const DEFAULT_TEMPLATE_SOURCE: &str = include_str!("../templates/default.v1.txt");

/// Phrases that introduce worked examples; constraints must not contain them.
pub const EXAMPLE_MARKERS: [&str; 6] = ["e.g.", "for example", "for instance", "such as", "like ", "example:"];

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("template line {line}: {reason}")]
    Template { line: usize, reason: String },
    #[error("template is missing section `{0}`")]
    MissingSection(String),
    #[error("constraint for {group} contains a worked example (`{marker}`)")]
    ExampleInConstraint { group: &'static str, marker: &'static str },
    #[error("shot `{0}` has no gold record")]
    MissingGold(String),
    #[error("shot `{0}` appears twice")]
    DuplicateShot(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Numerical,
    Textual,
    Structural,
}

impl ConstraintKind {
    pub fn key(self) -> &'static str {
        match self {
            ConstraintKind::Numerical => "numerical",
            ConstraintKind::Textual => "textual",
            ConstraintKind::Structural => "structural",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        [ConstraintKind::Numerical, ConstraintKind::Textual, ConstraintKind::Structural]
            .into_iter()
            .find(|k| k.key() == key)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub group: ConditionGroup,
    pub kind: ConstraintKind,
    pub text: String,
}

impl Constraint {
    /// Rejects constraint text that carries a worked example.
    pub fn new(group: ConditionGroup, kind: ConstraintKind, text: &str) -> Result<Self, PromptError> {
        let lower = text.to_lowercase();
        if let Some(marker) = EXAMPLE_MARKERS.iter().find(|m| lower.contains(*m)) {
            return Err(PromptError::ExampleInConstraint { group: group.key(), marker });
        }
        Ok(Constraint { group, kind, text: text.to_string() })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    /// Wording is the project's own, not a verbatim published prompt.
    pub reconstruction: bool,
    pub task_description: String,
    pub condition_definitions: BTreeMap<ConditionGroup, String>,
    pub constraints: Vec<Constraint>,
    /// Format instructions preceding the key list.
    pub format_instructions: String,
}

impl PromptTemplate {
    pub fn default_template() -> Self {
        Self::parse(DEFAULT_TEMPLATE_SOURCE).expect("embedded template is valid")
    }

    /// Output keys; always the ten condition slots, in slot order.
    pub fn output_schema(&self) -> [&'static str; 10] {
        Slot::ALL.map(Slot::key)
    }

    pub fn parse(source: &str) -> Result<Self, PromptError> {
        let mut version = None;
        let mut reconstruction = false;
        let mut sections: Vec<(usize, String, Vec<&str>)> = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let lineno = i + 1;
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("version:") {
                    version = Some(v.trim().to_string());
                } else if let Some(v) = comment.strip_prefix("reconstruction:") {
                    reconstruction = v.trim() == "true";
                }
                continue;
            }
            let trimmed = line.trim();
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                sections.push((lineno, name.to_string(), Vec::new()));
            } else if let Some((_, _, body)) = sections.last_mut() {
                body.push(line);
            } else if !trimmed.is_empty() {
                return Err(PromptError::Template { line: lineno, reason: "text before first section".into() });
            }
        }
        let version = version.ok_or(PromptError::MissingSection("version header".into()))?;

        let mut task = None;
        let mut format = None;
        let mut definitions = BTreeMap::new();
        let mut constraints = Vec::new();
        for (line, name, body) in sections {
            let text = body.join("\n").trim().to_string();
            let bad = |reason: String| PromptError::Template { line, reason };
            let parts: Vec<&str> = name.split('.').collect();
            match parts.as_slice() {
                ["task"] => task = Some(text),
                ["format"] => format = Some(text),
                ["definition", g] => {
                    let group = ConditionGroup::from_key(g).ok_or_else(|| bad(format!("unknown group `{g}`")))?;
                    if definitions.insert(group, text).is_some() {
                        return Err(bad(format!("duplicate definition for `{g}`")));
                    }
                }
                ["constraint", g, k] => {
                    let group = ConditionGroup::from_key(g).ok_or_else(|| bad(format!("unknown group `{g}`")))?;
                    let kind = ConstraintKind::from_key(k).ok_or_else(|| bad(format!("unknown constraint kind `{k}`")))?;
                    constraints.push(Constraint::new(group, kind, &text)?);
                }
                _ => return Err(bad(format!("unknown section `{name}`"))),
            }
        }
        for g in ConditionGroup::ALL {
            if !definitions.contains_key(&g) {
                return Err(PromptError::MissingSection(format!("definition.{}", g.key())));
            }
        }
        Ok(PromptTemplate {
            version,
            reconstruction,
            task_description: task.ok_or(PromptError::MissingSection("task".into()))?,
            condition_definitions: definitions,
            constraints,
            format_instructions: format.ok_or(PromptError::MissingSection("format".into()))?,
        })
    }
}

/// Independently toggled background sections (ablation switches).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Knowledge {
    pub definitions: bool,
    pub constraints: bool,
}

impl Default for Knowledge {
    fn default() -> Self {
        Knowledge { definitions: true, constraints: true }
    }
}

impl Knowledge {
    pub const NONE: Knowledge = Knowledge { definitions: false, constraints: false };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum ShotOrdering {
    /// Rank 1 first.
    SimilarityDescending,
    /// Rank 1 last, adjacent to the query.
    #[default]
    SimilarityAscending,
    Random { seed: u64 },
    /// Position in the demonstration pool.
    PoolOrder,
}

impl std::str::FromStr for ShotOrdering {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "similarity_descending" | "desc" => Ok(ShotOrdering::SimilarityDescending),
            "similarity_ascending" | "asc" => Ok(ShotOrdering::SimilarityAscending),
            "pool_order" | "pool" => Ok(ShotOrdering::PoolOrder),
            other => match other.strip_prefix("random:").map(str::parse) {
                Some(Ok(seed)) => Ok(ShotOrdering::Random { seed }),
                _ => Err(format!("unknown ordering `{other}` (desc|asc|pool|random:<seed>)")),
            },
        }
    }
}

/// A retrieved demonstration ready to be placed in a prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub id: String,
    pub paragraph: String,
    pub gold: Option<SynthesisRecord>,
    /// 1-based retrieval rank.
    pub rank: usize,
    pub pool_position: usize,
}

/// Applies an ordering; the result is always a permutation of the input.
pub fn order_shots(shots: &[Shot], ordering: ShotOrdering) -> Vec<Shot> {
    let mut out = shots.to_vec();
    match ordering {
        ShotOrdering::SimilarityDescending => out.sort_by_key(|s| s.rank),
        ShotOrdering::SimilarityAscending => out.sort_by_key(|s| std::cmp::Reverse(s.rank)),
        ShotOrdering::PoolOrder => out.sort_by_key(|s| s.pool_position),
        ShotOrdering::Random { seed } => {
            out.sort_by_key(|s| s.rank);
            out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub system: String,
    pub user: String,
    pub shot_count: usize,
    /// Demonstration ids in prompt order.
    pub shot_ids: Vec<String>,
    pub token_estimate: usize,
}

/// Four characters per token, rounded up; counts Unicode scalar values.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn schema_block(template: &PromptTemplate) -> String {
    let mut s = template.format_instructions.clone();
    for key in template.output_schema() {
        write!(s, "\n- {key}").unwrap();
    }
    s
}

pub fn system_text(template: &PromptTemplate, knowledge: Knowledge) -> String {
    let mut s = template.task_description.clone();
    if knowledge.definitions {
        s.push_str("\n\nCondition definitions:");
        for (group, text) in &template.condition_definitions {
            write!(s, "\n- {}: {}", group.title(), text.split_whitespace().collect::<Vec<_>>().join(" ")).unwrap();
        }
    }
    if knowledge.constraints && !template.constraints.is_empty() {
        s.push_str("\n\nConstraints:");
        for c in &template.constraints {
            let text = c.text.split_whitespace().collect::<Vec<_>>().join(" ");
            write!(s, "\n- {} ({}): {}", c.group.title(), c.kind.key(), text).unwrap();
        }
    }
    s
}

/// Builds the full prompt. Shots are reordered by `ordering` first.
pub fn assemble(
    template: &PromptTemplate,
    shots: &[Shot],
    ordering: ShotOrdering,
    query: &str,
    knowledge: Knowledge,
) -> Result<AssembledPrompt, PromptError> {
    let mut seen = std::collections::BTreeSet::new();
    for s in shots {
        if s.gold.is_none() {
            return Err(PromptError::MissingGold(s.id.clone()));
        }
        if !seen.insert(s.id.as_str()) {
            return Err(PromptError::DuplicateShot(s.id.clone()));
        }
    }
    let ordered = order_shots(shots, ordering);
    let system = system_text(template, knowledge);
    let mut user = String::new();
    for (i, shot) in ordered.iter().enumerate() {
        let gold = shot.gold.as_ref().expect("checked above");
        write!(user, "Example {}\nContext:\n{}\nCompletion:\n{}\n\n", i + 1, shot.paragraph.trim(), gold.to_json())
            .unwrap();
    }
    write!(user, "Context:\n{}\n\n{}\nCompletion:\n", query.trim(), schema_block(template)).unwrap();
    let token_estimate = estimate_tokens(&system) + estimate_tokens(&user);
    Ok(AssembledPrompt {
        system,
        user,
        shot_count: ordered.len(),
        shot_ids: ordered.into_iter().map(|s| s.id).collect(),
        token_estimate,
    })
}

/// Follow-up message for the single repair round.
pub fn repair_instruction(template: &PromptTemplate, malformed: &str) -> String {
    format!(
        "Your previous answer could not be read as the requested object:\n{}\n\nReturn only the structured object. {}\n",
        malformed.trim(),
        schema_block(template)
    )
}

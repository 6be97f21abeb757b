//! Dual annotation, inter-annotator agreement, and the staged human-AI
//! curation workflow that turns annotated paragraphs into demonstrations.
//!
//! A task moves strictly forward:
//!
//! ```text
//! PreExtracted ──human pass──▶ HumanAnnotated ──few-shot check──▶ FewShotChecked ──verdicts──▶ Finalized
//! ```
//!
//! Curators may exclude a task at any non-final stage with a reason code;
//! excluded tasks never reach the pool.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{Slot, SynthesisRecord};
use crate::retrieval::Demonstration;
use crate::text::{collapse_whitespace, normalize_value};

/// Field-level Jaccard validity threshold.
pub const FIELD_VALIDITY_THRESHOLD: f64 = 0.8;
/// Share of considered fields that must be valid for the article to pass.
pub const PAPER_VALIDITY_THRESHOLD: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CurationState {
    PreExtracted,
    HumanAnnotated,
    FewShotChecked,
    Finalized,
}

#[derive(Debug, Error, PartialEq)]
pub enum CurationError {
    #[error("action `{action}` is not allowed in state {from:?}")]
    IllegalTransition { from: CurationState, action: &'static str },
    #[error("task is excluded ({0})")]
    Excluded(String),
    #[error("missing verdicts for disagreeing fields: {0:?}")]
    MissingVerdicts(Vec<Slot>),
    #[error("annotator `{0}` is not assigned to this task")]
    UnknownAnnotator(String),
    #[error("both drafts are required before computing agreement")]
    DraftsIncomplete,
    #[error("a task needs exactly two distinct annotators")]
    Annotators,
    #[error("few-shot check failed: {0}")]
    Check(String),
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counting as full agreement.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Whitespace tokens of the normalized field value.
pub fn field_tokens(value: Option<&str>) -> BTreeSet<String> {
    value
        .map(|v| normalize_value(v).split(' ').filter(|t| !t.is_empty()).map(String::from).collect())
        .unwrap_or_default()
}

pub fn field_is_valid(jaccard: f64) -> bool {
    jaccard >= FIELD_VALIDITY_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldAgreement {
    pub slot: Slot,
    pub jaccard: f64,
    pub valid: bool,
    /// At least one annotator entered a value.
    pub considered: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgreementVerdict {
    Valid,
    /// Kept aside as supplementary data pending manual review.
    NeedsReview,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub fields: Vec<FieldAgreement>,
    /// Valid fields over considered fields (1.0 when nothing was entered).
    pub overlap_rate: f64,
    pub verdict: AgreementVerdict,
    /// Fields that failed the Jaccard check and need a curator.
    pub flagged: Vec<Slot>,
    pub basis: String,
}

fn merge_field(a: &str, b: &str) -> String {
    let (a, b) = (collapse_whitespace(a), collapse_whitespace(b));
    // Pick the primary side by content so the union is argument-order free.
    let (first, second) = if (normalize_value(&a), &a) <= (normalize_value(&b), &b) { (a, b) } else { (b, a) };
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for tok in first.split(' ').chain(second.split(' ')) {
        if !tok.is_empty() && seen.insert(tok.to_lowercase()) {
            out.push(tok.to_string());
        }
    }
    out.join(" ")
}

/// Compares two independent drafts field by field; valid fields are merged
/// as the token union of both values, invalid ones are left absent and
/// flagged.
pub fn agreement_merge(a: &SynthesisRecord, b: &SynthesisRecord) -> (AgreementResult, SynthesisRecord) {
    let mut fields = Vec::with_capacity(10);
    let mut merged = SynthesisRecord::new();
    let mut flagged = Vec::new();
    let (mut considered, mut valid_considered) = (0usize, 0usize);
    for slot in Slot::ALL {
        let (va, vb) = (a.get(slot), b.get(slot));
        let j = jaccard(&field_tokens(va), &field_tokens(vb));
        let valid = field_is_valid(j);
        let is_considered = va.is_some() || vb.is_some();
        if is_considered {
            considered += 1;
            if valid {
                valid_considered += 1;
            } else {
                flagged.push(slot);
            }
        }
        if valid {
            if let (Some(x), Some(y)) = (va, vb) {
                merged.set(slot, Some(merge_field(x, y)));
            }
        }
        fields.push(FieldAgreement { slot, jaccard: j, valid, considered: is_considered });
    }
    let overlap_rate = if considered == 0 { 1.0 } else { valid_considered as f64 / considered as f64 };
    let verdict = if overlap_rate >= PAPER_VALIDITY_THRESHOLD {
        AgreementVerdict::Valid
    } else {
        AgreementVerdict::NeedsReview
    };
    let result = AgreementResult {
        fields,
        overlap_rate,
        verdict,
        flagged,
        basis: "fields where at least one annotator entered a value".into(),
    };
    (result, merged)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    ChiralDuplicate,
    MultipleSyntheses,
    Other(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub slot: Slot,
    pub human: Option<String>,
    pub ai: Option<String>,
}

/// Fields where the two records disagree after normalization.
pub fn diff_records(human: &SynthesisRecord, ai: &SynthesisRecord) -> Vec<FieldDiff> {
    Slot::ALL
        .into_iter()
        .filter(|&s| human.get(s).map(normalize_value) != ai.get(s).map(normalize_value))
        .map(|s| FieldDiff { slot: s, human: human.get(s).map(String::from), ai: ai.get(s).map(String::from) })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "value", rename_all = "snake_case")]
pub enum Verdict {
    AcceptHuman,
    AcceptAi,
    Edit(Option<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum CurationAction {
    /// The human pass over the AI pre-annotation. Without an explicit
    /// record, the agreement-merged record is used.
    HumanPass { record: Option<SynthesisRecord> },
    FewShotCheck,
    Finalize { verdicts: BTreeMap<Slot, Verdict> },
    Exclude { reason: ExclusionReason },
}

impl CurationAction {
    fn name(&self) -> &'static str {
        match self {
            CurationAction::HumanPass { .. } => "human_pass",
            CurationAction::FewShotCheck => "few_shot_check",
            CurationAction::Finalize { .. } => "finalize",
            CurationAction::Exclude { .. } => "exclude",
        }
    }
}

/// Runs the few-shot re-extraction for a paragraph against the current
/// finalized pool.
pub trait FewShotChecker {
    /// Returns the AI record and diagnostics (e.g. zero-shot fallback).
    fn check(&mut self, paragraph_id: &str, paragraph: &str) -> Result<(SynthesisRecord, Vec<String>), String>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub id: String,
    pub paragraph_id: String,
    pub paragraph: String,
    pub annotators: [String; 2],
    pub ai_pre_annotation: Option<SynthesisRecord>,
    pub drafts: BTreeMap<String, SynthesisRecord>,
    pub agreement: Option<AgreementResult>,
    pub merged: Option<SynthesisRecord>,
    pub human_record: Option<SynthesisRecord>,
    pub few_shot_record: Option<SynthesisRecord>,
    pub diff: Vec<FieldDiff>,
    pub final_record: Option<SynthesisRecord>,
    pub state: CurationState,
    pub excluded: Option<ExclusionReason>,
    pub diagnostics: Vec<String>,
    /// Bumped on every mutation.
    pub version: u64,
}

impl AnnotationTask {
    pub fn new(
        id: &str,
        paragraph_id: &str,
        paragraph: &str,
        annotators: [String; 2],
        ai_pre_annotation: Option<SynthesisRecord>,
    ) -> Result<Self, CurationError> {
        if annotators[0] == annotators[1] || annotators.iter().any(|a| a.trim().is_empty()) {
            return Err(CurationError::Annotators);
        }
        Ok(AnnotationTask {
            id: id.into(),
            paragraph_id: paragraph_id.into(),
            paragraph: paragraph.into(),
            annotators,
            ai_pre_annotation,
            drafts: BTreeMap::new(),
            agreement: None,
            merged: None,
            human_record: None,
            few_shot_record: None,
            diff: Vec::new(),
            final_record: None,
            state: CurationState::PreExtracted,
            excluded: None,
            diagnostics: Vec::new(),
            version: 0,
        })
    }

    pub fn submit_draft(&mut self, annotator: &str, record: SynthesisRecord) -> Result<(), CurationError> {
        self.ensure_open()?;
        if !self.annotators.iter().any(|a| a == annotator) {
            return Err(CurationError::UnknownAnnotator(annotator.into()));
        }
        if self.state != CurationState::PreExtracted {
            return Err(CurationError::IllegalTransition { from: self.state, action: "draft" });
        }
        self.drafts.insert(annotator.into(), record);
        self.version += 1;
        Ok(())
    }

    pub fn compute_agreement(&mut self) -> Result<&AgreementResult, CurationError> {
        self.ensure_open()?;
        let a = self.drafts.get(&self.annotators[0]).ok_or(CurationError::DraftsIncomplete)?;
        let b = self.drafts.get(&self.annotators[1]).ok_or(CurationError::DraftsIncomplete)?;
        let (result, merged) = agreement_merge(a, b);
        self.agreement = Some(result);
        self.merged = Some(merged);
        self.version += 1;
        Ok(self.agreement.as_ref().expect("just set"))
    }

    /// Drafts as seen by `viewer`: before agreement, an annotator sees only
    /// their own draft.
    pub fn visible_drafts(&self, viewer: Option<&str>) -> BTreeMap<String, SynthesisRecord> {
        if self.agreement.is_some() {
            return self.drafts.clone();
        }
        match viewer {
            Some(v) => self.drafts.iter().filter(|(k, _)| k.as_str() == v).map(|(k, r)| (k.clone(), r.clone())).collect(),
            None => BTreeMap::new(),
        }
    }

    fn ensure_open(&self) -> Result<(), CurationError> {
        match &self.excluded {
            Some(reason) => Err(CurationError::Excluded(format!("{reason:?}"))),
            None => Ok(()),
        }
    }

    /// The demonstration this task contributes once finalized.
    pub fn demonstration(&self) -> Option<Demonstration> {
        match (self.state, &self.final_record) {
            (CurationState::Finalized, Some(record)) => Some(Demonstration {
                id: self.paragraph_id.clone(),
                paragraph: self.paragraph.clone(),
                gold: record.clone(),
                curation_state: CurationState::Finalized,
            }),
            _ => None,
        }
    }
}

/// Applies one workflow action. On `Finalize` the returned state is
/// `Finalized` and [`AnnotationTask::demonstration`] yields the new pool
/// entry.
pub fn advance_curation(
    task: &mut AnnotationTask,
    action: CurationAction,
    checker: &mut dyn FewShotChecker,
) -> Result<CurationState, CurationError> {
    task.ensure_open()?;
    let illegal = |task: &AnnotationTask, action: &CurationAction| CurationError::IllegalTransition {
        from: task.state,
        action: action.name(),
    };
    match (&task.state, &action) {
        (CurationState::Finalized, CurationAction::Exclude { .. }) => return Err(illegal(task, &action)),
        (_, CurationAction::Exclude { reason }) => {
            task.excluded = Some(reason.clone());
        }
        (CurationState::PreExtracted, CurationAction::HumanPass { record }) => {
            let record = match record {
                Some(r) => r.clone(),
                None => task.merged.clone().ok_or(CurationError::DraftsIncomplete)?,
            };
            task.human_record = Some(record);
            task.state = CurationState::HumanAnnotated;
        }
        (CurationState::HumanAnnotated, CurationAction::FewShotCheck) => {
            let (ai, diagnostics) =
                checker.check(&task.paragraph_id, &task.paragraph).map_err(CurationError::Check)?;
            let human = task.human_record.as_ref().expect("set by the human pass");
            task.diff = diff_records(human, &ai);
            task.few_shot_record = Some(ai);
            task.diagnostics.extend(diagnostics);
            task.state = CurationState::FewShotChecked;
        }
        (CurationState::FewShotChecked, CurationAction::Finalize { verdicts }) => {
            let missing: Vec<Slot> =
                task.diff.iter().map(|d| d.slot).filter(|s| !verdicts.contains_key(s)).collect();
            if !missing.is_empty() {
                return Err(CurationError::MissingVerdicts(missing));
            }
            let mut record = task.human_record.clone().expect("set by the human pass");
            for (slot, verdict) in verdicts {
                let value = match verdict {
                    Verdict::AcceptHuman => continue,
                    Verdict::AcceptAi => task.few_shot_record.as_ref().and_then(|r| r.get(*slot)).map(String::from),
                    Verdict::Edit(v) => v.clone(),
                };
                record.set(*slot, value);
            }
            task.final_record = Some(record);
            task.state = CurationState::Finalized;
        }
        _ => return Err(illegal(task, &action)),
    }
    task.version += 1;
    Ok(task.state)
}

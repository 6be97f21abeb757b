//! Synthesis-paragraph detection.
//!
//! Three pieces live here: the rules that turn two annotators' span
//! selections into labeled paragraphs, a lexical logistic-regression
//! baseline with stratified k-fold cross-validation, and adapters that let
//! an external classifier stand behind the same [`ParagraphClassifier`]
//! contract.

mod external;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::{HttpClassifier, SubprocessClassifier};
pub use model::{
    classify, stratified_folds, train, train_stratified_cv, Classification, CvReport, DetectorModel,
    FoldMetrics, TrainConfig,
};

use crate::corpus::Document;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("spans belong to different documents ({0} vs {1})")]
    DocumentMismatch(String, String),
    #[error("training needs both classes; got {positives} positive and {negatives} negative samples")]
    SingleClass { positives: usize, negatives: usize },
    #[error("need at least 2 folds and at least one sample of each class per fold (folds = {0})")]
    Folds(usize),
    #[error("model file: {0}")]
    Format(String),
    #[error("external classifier: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A paragraph selection made by one annotator, in body byte offsets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSpan {
    pub doc_doi: String,
    pub start: usize,
    pub end: usize,
}

impl AnnotatedSpan {
    pub fn new(doc_doi: &str, start: usize, end: usize) -> Self {
        AnnotatedSpan { doc_doi: doc_doi.to_string(), start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergeOutcome {
    Valid(AnnotatedSpan),
    /// The two selections do not overlap, so each was marked by one
    /// annotator only.
    Rejected,
}

/// Reconciles two annotators' spans: any overlap yields the larger span.
///
/// Equal-length partial overlaps resolve to the span that starts first so
/// the result does not depend on argument order.
pub fn merge_dual_annotations(
    a: &AnnotatedSpan,
    b: &AnnotatedSpan,
) -> Result<MergeOutcome, DetectorError> {
    if a.doc_doi != b.doc_doi {
        return Err(DetectorError::DocumentMismatch(a.doc_doi.clone(), b.doc_doi.clone()));
    }
    if !a.overlaps(b.start, b.end) {
        return Ok(MergeOutcome::Rejected);
    }
    let pick = match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Greater => a,
        std::cmp::Ordering::Less => b,
        std::cmp::Ordering::Equal => {
            if (a.start, a.end) <= (b.start, b.end) {
                a
            } else {
                b
            }
        }
    };
    Ok(MergeOutcome::Valid(pick.clone()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledParagraph {
    pub paragraph_id: String,
    pub text: String,
    pub label: bool,
    /// Annotators behind a positive label; empty for derived negatives.
    pub provenance: Vec<String>,
}

/// Labels every paragraph of `document`: paragraphs intersecting a valid
/// span are positive (credited to `annotators`), all others negative.
pub fn label_document(
    document: &Document,
    valid_spans: &[AnnotatedSpan],
    annotators: &[String],
) -> Vec<LabeledParagraph> {
    document
        .paragraphs
        .iter()
        .map(|p| {
            let (s, e) = p.char_span;
            let positive = valid_spans
                .iter()
                .any(|span| span.doc_doi == document.doi && span.overlaps(s, e));
            LabeledParagraph {
                paragraph_id: p.id.clone(),
                text: p.text.clone(),
                label: positive,
                provenance: if positive { annotators.to_vec() } else { Vec::new() },
            }
        })
        .collect()
}

/// Paragraphs that intersect none of the valid spans, as negatives.
pub fn derive_negatives(document: &Document, valid_spans: &[AnnotatedSpan]) -> Vec<LabeledParagraph> {
    label_document(document, valid_spans, &[])
        .into_iter()
        .filter(|l| !l.label)
        .collect()
}

/// Anything that can score a paragraph for "synthesis-ness".
pub trait ParagraphClassifier: Send + Sync {
    fn score(&self, text: &str) -> Result<f64, DetectorError>;

    fn threshold(&self) -> f64 {
        0.5
    }

    fn classify(&self, text: &str) -> Result<Classification, DetectorError> {
        let score = self.score(text)?;
        Ok(Classification { score, label: score >= self.threshold() })
    }
}

impl ParagraphClassifier for DetectorModel {
    fn score(&self, text: &str) -> Result<f64, DetectorError> {
        Ok(classify(self, text).score)
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::record::{Slot, SynthesisRecord};
use crate::text::normalize_value;

/// Outcome of comparing one predicted slot against its gold value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionOutcome {
    TP,
    FP,
    TN,
    FN,
}

/// Assigns exactly one confusion cell to a (predicted, gold) pair.
///
/// Values are compared after case folding and whitespace collapse. A
/// present prediction that differs from present gold lands in FP only, so
/// every slot contributes to exactly one cell.
pub fn classify_slot(predicted: Option<&str>, gold: Option<&str>) -> ConditionOutcome {
    let predicted = predicted.map(normalize_value).filter(|v| !v.is_empty());
    let gold = gold.map(normalize_value).filter(|v| !v.is_empty());
    match (predicted, gold) {
        (Some(p), Some(g)) if p == g => ConditionOutcome::TP,
        (Some(_), Some(_)) => ConditionOutcome::FP,
        (None, Some(_)) => ConditionOutcome::FN,
        (None, None) => ConditionOutcome::TN,
        (Some(_), None) => ConditionOutcome::FP,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn add(&mut self, outcome: ConditionOutcome) {
        match outcome {
            ConditionOutcome::TP => self.tp += 1,
            ConditionOutcome::FP => self.fp += 1,
            ConditionOutcome::TN => self.tn += 1,
            ConditionOutcome::FN => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> MetricSet {
        MetricSet::from_matrix(self)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy, precision, recall and F1. Undefined ratios are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub acc: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricSet {
    pub fn from_matrix(m: &ConfusionMatrix) -> Self {
        let precision = ratio(m.tp, m.tp + m.fp);
        let recall = ratio(m.tp, m.tp + m.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        MetricSet { acc: ratio(m.tp + m.tn, m.total()), precision, recall, f1 }
    }
}

/// Confusion counts for a whole run, overall and per slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub paragraphs: usize,
    pub matrix: ConfusionMatrix,
    pub metrics: MetricSet,
    pub per_slot: BTreeMap<Slot, ConfusionMatrix>,
}

/// Scores predictions `(paragraph id, record)` against gold records.
pub fn score_run<'a, I>(
    predictions: I,
    gold: &BTreeMap<String, SynthesisRecord>,
) -> Result<RunScore, EvalError>
where
    I: IntoIterator<Item = (&'a str, &'a SynthesisRecord)>,
{
    let mut matrix = ConfusionMatrix::default();
    let mut per_slot: BTreeMap<Slot, ConfusionMatrix> =
        Slot::ALL.into_iter().map(|s| (s, ConfusionMatrix::default())).collect();
    let mut paragraphs = 0;
    for (id, predicted) in predictions {
        let gold_record = gold.get(id).ok_or_else(|| EvalError::MissingGold(id.to_string()))?;
        paragraphs += 1;
        for slot in Slot::ALL {
            let outcome = classify_slot(predicted.get(slot), gold_record.get(slot));
            matrix.add(outcome);
            per_slot.get_mut(&slot).expect("all slots present").add(outcome);
        }
    }
    Ok(RunScore { paragraphs, matrix, metrics: matrix.metrics(), per_slot })
}

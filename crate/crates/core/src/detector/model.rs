use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{DetectorError, LabeledParagraph};
use crate::evalkit::{stats, ConditionOutcome, ConfusionMatrix, MetricSet};
use crate::text::tokenize;

const MAGIC: &[u8; 4] = b"SXDM";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty on term weights; the bias is not penalized.
    pub l2: f64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 300, learning_rate: 2.0, l2: 1e-4, threshold: 0.5 }
    }
}

/// A trained lexical logistic-regression detector.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorModel {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    index: HashMap<String, usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub score: f64,
    pub label: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

type SparseVec = Vec<(usize, f64)>;

impl DetectorModel {
    fn from_parts(vocabulary: Vec<String>, idf: Vec<f64>, weights: Vec<f64>, bias: f64, threshold: f64) -> Self {
        let index = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        DetectorModel { vocabulary, idf, weights, bias, threshold, index }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn weight(&self, term: &str) -> Option<f64> {
        self.index.get(term).map(|&i| self.weights[i])
    }

    /// L2-normalized tf·idf features over the model vocabulary.
    fn features(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            if let Some(&i) = self.index.get(&tok) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = counts.into_iter().map(|(i, tf)| (i, tf * self.idf[i])).collect();
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, x) in &mut v {
                *x /= norm;
            }
        }
        v
    }

    fn logit(&self, features: &SparseVec) -> f64 {
        self.bias + features.iter().map(|&(i, x)| self.weights[i] * x).sum::<f64>()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DetectorError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.threshold.to_le_bytes())?;
        w.write_all(&self.bias.to_le_bytes())?;
        w.write_all(&(self.vocabulary.len() as u32).to_le_bytes())?;
        for (i, term) in self.vocabulary.iter().enumerate() {
            w.write_all(&(term.len() as u32).to_le_bytes())?;
            w.write_all(term.as_bytes())?;
            w.write_all(&self.idf[i].to_le_bytes())?;
            w.write_all(&self.weights[i].to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, DetectorError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(DetectorError::Format("not a detector model file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(DetectorError::Format(format!("unsupported model version {version}")));
        }
        let threshold = read_f64(&mut r)?;
        let bias = read_f64(&mut r)?;
        let n = read_u32(&mut r)? as usize;
        let (mut vocabulary, mut idf, mut weights) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            vocabulary.push(
                String::from_utf8(buf).map_err(|_| DetectorError::Format("term is not UTF-8".into()))?,
            );
            idf.push(read_f64(&mut r)?);
            weights.push(read_f64(&mut r)?);
        }
        Ok(DetectorModel::from_parts(vocabulary, idf, weights, bias, threshold))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DetectorError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, DetectorError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Scores a paragraph; empty or out-of-vocabulary text gets the bias-only score.
pub fn classify(model: &DetectorModel, text: &str) -> Classification {
    let score = sigmoid(model.logit(&model.features(text)));
    Classification { score, label: score >= model.threshold }
}

/// Fits a detector on all `samples`.
pub fn train(samples: &[LabeledParagraph], config: &TrainConfig) -> Result<DetectorModel, DetectorError> {
    let positives = samples.iter().filter(|s| s.label).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(DetectorError::SingleClass { positives, negatives });
    }

    let docs: Vec<Vec<String>> = samples.iter().map(|s| tokenize(&s.text)).collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for tokens in &docs {
        let mut uniq: Vec<&str> = tokens.iter().map(String::as_str).collect();
        uniq.sort_unstable();
        uniq.dedup();
        for t in uniq {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = samples.len() as f64;
    let vocabulary: Vec<String> = df.keys().map(|t| t.to_string()).collect();
    let idf: Vec<f64> = df.values().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
    let mut model = DetectorModel::from_parts(vocabulary.clone(), idf, vec![0.0; vocabulary.len()], 0.0, config.threshold);

    let features: Vec<SparseVec> = samples.iter().map(|s| model.features(&s.text)).collect();
    let targets: Vec<f64> = samples.iter().map(|s| if s.label { 1.0 } else { 0.0 }).collect();
    let mut grad = vec![0.0; model.weights.len()];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_bias = 0.0;
        for (x, &y) in features.iter().zip(&targets) {
            let err = sigmoid(model.logit(x)) - y;
            grad_bias += err;
            for &(i, v) in x {
                grad[i] += err * v;
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * (g / n + config.l2 * *w);
        }
        model.bias -= config.learning_rate * grad_bias / n;
    }
    Ok(model)
}

/// Fold assignment that keeps each class spread evenly: the i-th positive
/// and the i-th negative (in input order) both go to fold `i % folds`.
pub fn stratified_folds(labels: &[bool], folds: usize) -> Vec<usize> {
    let (mut pos, mut neg) = (0usize, 0usize);
    labels
        .iter()
        .map(|&l| {
            let counter = if l { &mut pos } else { &mut neg };
            let f = *counter % folds;
            *counter += 1;
            f
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold_index: usize,
    pub positives: usize,
    pub negatives: usize,
    pub matrix: ConfusionMatrix,
    pub metrics: MetricSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldMetrics>,
    /// Per-metric mean over the folds where that metric is defined.
    pub mean: MetricSet,
}

/// Stratified k-fold cross-validation followed by a final fit on all data.
pub fn train_stratified_cv(
    samples: &[LabeledParagraph],
    folds: usize,
    config: &TrainConfig,
) -> Result<(DetectorModel, CvReport), DetectorError> {
    let positives = samples.iter().filter(|s| s.label).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(DetectorError::SingleClass { positives, negatives });
    }
    if folds < 2 || positives < 2 || negatives < 2 {
        return Err(DetectorError::Folds(folds));
    }
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    let assignment = stratified_folds(&labels, folds);

    let mut reports = Vec::with_capacity(folds);
    for fold in 0..folds {
        let (mut train_set, mut test_set) = (Vec::new(), Vec::new());
        for (s, &f) in samples.iter().zip(&assignment) {
            if f == fold { test_set.push(s.clone()) } else { train_set.push(s.clone()) }
        }
        let model = train(&train_set, config).map_err(|_| DetectorError::Folds(folds))?;
        let mut matrix = ConfusionMatrix::default();
        for s in &test_set {
            let predicted = classify(&model, &s.text).label;
            matrix.add(match (predicted, s.label) {
                (true, true) => ConditionOutcome::TP,
                (true, false) => ConditionOutcome::FP,
                (false, true) => ConditionOutcome::FN,
                (false, false) => ConditionOutcome::TN,
            });
        }
        reports.push(FoldMetrics {
            fold_index: fold,
            positives: test_set.iter().filter(|s| s.label).count(),
            negatives: test_set.iter().filter(|s| !s.label).count(),
            matrix,
            metrics: matrix.metrics(),
        });
    }

    let avg = |f: fn(&MetricSet) -> Option<f64>| {
        let vals: Vec<f64> = reports.iter().filter_map(|r| f(&r.metrics)).collect();
        stats::mean(&vals)
    };
    let mean = MetricSet {
        acc: avg(|m| m.acc),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
    };
    let model = train(samples, config)?;
    Ok((model, CvReport { folds: reports, mean }))
}

//! Document ingestion, paragraph segmentation and the dataset funnel.
//!
//! Input is one JSON object per line with `doi`, `mof_ids`, `title` and
//! `body`. Bodies are split into paragraphs on blank lines; lines inside a
//! paragraph are joined with a single space. Malformed lines never vanish:
//! they are collected as [`Reject`]s with a reason.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read input stream: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: String,
    pub doc_doi: String,
    pub index: usize,
    pub text: String,
    /// Byte offsets `(start, end)` of the raw paragraph inside the body.
    pub char_span: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doi: String,
    pub mof_ids: Vec<String>,
    pub title: String,
    pub body: String,
    pub paragraphs: Vec<Paragraph>,
    /// Text between paragraphs; `separators.len() == paragraphs.len() + 1`.
    pub separators: Vec<String>,
}

impl Document {
    pub fn new(doi: &str, mof_ids: Vec<String>, title: &str, body: &str) -> Self {
        let (paragraphs, separators) = segment(doi, body);
        Document {
            doi: doi.to_string(),
            mof_ids,
            title: title.to_string(),
            body: body.to_string(),
            paragraphs,
            separators,
        }
    }

    /// Raw body slice covered by paragraph `index`.
    pub fn raw_paragraph(&self, index: usize) -> &str {
        let (s, e) = self.paragraphs[index].char_span;
        &self.body[s..e]
    }

    /// Rebuilds the body from separators and raw paragraph slices.
    pub fn reconstruct_body(&self) -> String {
        let mut out = String::with_capacity(self.body.len());
        for (i, sep) in self.separators.iter().enumerate() {
            out.push_str(sep);
            if i < self.paragraphs.len() {
                out.push_str(self.raw_paragraph(i));
            }
        }
        out
    }

    pub fn paragraph_by_id(&self, id: &str) -> Option<&Paragraph> {
        self.paragraphs.iter().find(|p| p.id == id)
    }
}

pub fn paragraph_id(doi: &str, index: usize) -> String {
    format!("{doi}#p{index}")
}

fn is_blank(line: &str) -> bool {
    line.trim().is_empty()
}

/// Splits `body` into paragraphs at runs of one or more blank lines.
fn segment(doi: &str, body: &str) -> (Vec<Paragraph>, Vec<String>) {
    // Line spans including their terminators.
    let mut lines: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for (i, b) in body.bytes().enumerate() {
        if b == b'\n' {
            lines.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < body.len() {
        lines.push((start, body.len()));
    }

    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for &(s, e) in &lines {
        if is_blank(&body[s..e]) {
            if let Some(block) = current.take() {
                blocks.push(block);
            }
        } else {
            // Paragraph spans exclude the trailing line terminator.
            let content_end = body[s..e].trim_end_matches(['\n', '\r']).len() + s;
            current = Some(match current {
                Some((bs, _)) => (bs, content_end),
                None => (s, content_end),
            });
        }
    }
    if let Some(block) = current {
        blocks.push(block);
    }

    let mut paragraphs = Vec::with_capacity(blocks.len());
    let mut separators = Vec::with_capacity(blocks.len() + 1);
    let mut cursor = 0;
    for (index, &(s, e)) in blocks.iter().enumerate() {
        separators.push(body[cursor..s].to_string());
        let text = body[s..e]
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        paragraphs.push(Paragraph {
            id: paragraph_id(doi, index),
            doc_doi: doi.to_string(),
            index,
            text,
            char_span: (s, e),
        });
        cursor = e;
    }
    separators.push(body[cursor..].to_string());
    (paragraphs, separators)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub doi: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub doi: String,
    pub message: String,
}

/// Counts of what the intake saw before any filtering.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntakeCounts {
    pub records_seen: usize,
    pub missing_doi: usize,
    pub duplicate_doi: usize,
    pub malformed: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub intake: IntakeCounts,
    pub rejects: Vec<Reject>,
    pub warnings: Vec<Warning>,
}

impl Corpus {
    pub fn document(&self, doi: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doi == doi)
    }

    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.documents.iter().flat_map(|d| d.paragraphs.iter())
    }

    pub fn paragraph(&self, id: &str) -> Option<&Paragraph> {
        self.paragraphs().find(|p| p.id == id)
    }

    /// Adds an already-built document, enforcing doi uniqueness.
    pub fn push(&mut self, doc: Document) -> Result<(), Reject> {
        if doc.doi.trim().is_empty() {
            return Err(Reject { line: 0, doi: None, reason: "missing doi".into() });
        }
        if self.document(&doc.doi).is_some() {
            return Err(Reject { line: 0, doi: Some(doc.doi), reason: "duplicate doi".into() });
        }
        if doc.paragraphs.is_empty() {
            self.warnings.push(Warning { doi: doc.doi.clone(), message: "empty body".into() });
        }
        self.documents.push(doc);
        Ok(())
    }
}

/// One input line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SourceRecord {
    pub doi: String,
    pub mof_ids: Vec<String>,
    #[serde(default)]
    pub title: String,
    pub body: String,
}

/// Reads line-delimited records into a corpus.
pub fn ingest<R: BufRead>(source: R) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    let mut seen = BTreeSet::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        corpus.intake.records_seen += 1;
        let record: SourceRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                corpus.intake.malformed += 1;
                corpus.rejects.push(Reject {
                    line: line_no,
                    doi: None,
                    reason: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        let doi = record.doi.trim().to_string();
        if doi.is_empty() {
            corpus.intake.missing_doi += 1;
            corpus.rejects.push(Reject { line: line_no, doi: None, reason: "missing doi".into() });
            continue;
        }
        if !seen.insert(doi.clone()) {
            corpus.intake.duplicate_doi += 1;
            corpus.rejects.push(Reject {
                line: line_no,
                doi: Some(doi),
                reason: "duplicate doi".into(),
            });
            continue;
        }
        let doc = Document::new(&doi, record.mof_ids, &record.title, &record.body);
        if doc.paragraphs.is_empty() {
            corpus.warnings.push(Warning { doi: doi.clone(), message: "empty body".into() });
        }
        corpus.documents.push(doc);
    }
    Ok(corpus)
}

/// A document that survived the funnel with its single synthesis paragraph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedDocument {
    pub doi: String,
    pub mof_id: String,
    pub paragraph: Paragraph,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredCorpus {
    pub selected: Vec<SelectedDocument>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_docs: usize,
    pub docs_with_doi: usize,
    pub deduped_dois: usize,
    pub single_mof_docs: usize,
    pub single_synthesis_paragraph_docs: usize,
    /// Single-MOF documents without any positive paragraph.
    pub no_synthesis_paragraph_docs: usize,
    /// Single-MOF documents with two or more positive paragraphs.
    pub multi_synthesis_paragraph_docs: usize,
    /// Paragraphs the label map did not cover (treated as negative).
    pub unlabeled_paragraphs: usize,
    /// Share of body bytes that sits in positive paragraphs, over all
    /// ingested documents; `None` when there is no body text at all.
    pub synthesis_share_of_length: Option<f64>,
}

impl CorpusStats {
    pub fn funnel(&self) -> [usize; 5] {
        [
            self.total_docs,
            self.docs_with_doi,
            self.deduped_dois,
            self.single_mof_docs,
            self.single_synthesis_paragraph_docs,
        ]
    }
}

/// Keeps documents with exactly one MOF id and exactly one positive
/// synthesis paragraph, recording every funnel stage.
pub fn apply_pipeline_filters(
    corpus: &Corpus,
    detector_labels: &BTreeMap<String, bool>,
) -> (FilteredCorpus, CorpusStats) {
    let intake = &corpus.intake;
    let mut stats = CorpusStats {
        total_docs: intake.records_seen - intake.malformed,
        docs_with_doi: intake.records_seen - intake.malformed - intake.missing_doi,
        deduped_dois: corpus.documents.len(),
        ..CorpusStats::default()
    };
    let mut filtered = FilteredCorpus::default();
    let mut body_bytes = 0usize;
    let mut synthesis_bytes = 0usize;

    for doc in &corpus.documents {
        body_bytes += doc.body.len();
        let mut positives = Vec::new();
        for p in &doc.paragraphs {
            match detector_labels.get(&p.id) {
                Some(true) => {
                    synthesis_bytes += p.char_span.1 - p.char_span.0;
                    positives.push(p);
                }
                Some(false) => {}
                None => stats.unlabeled_paragraphs += 1,
            }
        }
        if doc.mof_ids.len() != 1 {
            continue;
        }
        stats.single_mof_docs += 1;
        match positives.as_slice() {
            [] => stats.no_synthesis_paragraph_docs += 1,
            [only] => {
                stats.single_synthesis_paragraph_docs += 1;
                filtered.selected.push(SelectedDocument {
                    doi: doc.doi.clone(),
                    mof_id: doc.mof_ids[0].clone(),
                    paragraph: (*only).clone(),
                });
            }
            _ => stats.multi_synthesis_paragraph_docs += 1,
        }
    }
    stats.synthesis_share_of_length =
        (body_bytes > 0).then(|| synthesis_bytes as f64 / body_bytes as f64);
    (filtered, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(doi: &str, mofs: &[&str], body: &str) -> String {
        serde_json::json!({"doi": doi, "mof_ids": mofs, "title": "t", "body": body}).to_string()
    }

    #[test]
    fn blank_line_segmentation() {
        let input = line("10.1/a", &["M1"], "Para1.\n\nPara2.");
        let corpus = ingest(input.as_bytes()).unwrap();
        let doc = &corpus.documents[0];
        assert_eq!(doc.paragraphs.len(), 2);
        assert_eq!(doc.paragraphs[0].index, 0);
        assert_eq!(doc.paragraphs[1].index, 1);
        assert_eq!(doc.paragraphs[0].text, "Para1.");
        assert_eq!(doc.paragraphs[1].id, "10.1/a#p1");
        assert_eq!(doc.reconstruct_body(), doc.body);
    }

    #[test]
    fn lines_within_a_paragraph_are_joined() {
        let doc = Document::new("d", vec![], "", "\n  first line\r\nsecond line\n \n\n\nthird\n");
        assert_eq!(doc.paragraphs.len(), 2);
        assert_eq!(doc.paragraphs[0].text, "first line second line");
        assert_eq!(doc.paragraphs[1].text, "third");
        assert_eq!(doc.reconstruct_body(), doc.body);
        let (a, b) = (doc.paragraphs[0].char_span, doc.paragraphs[1].char_span);
        assert!(a.0 < a.1 && a.1 <= b.0 && b.0 < b.1);
    }

    #[test]
    fn empty_body_produces_warning() {
        let corpus = ingest(line("10.1/e", &["M"], "").as_bytes()).unwrap();
        assert_eq!(corpus.documents[0].paragraphs.len(), 0);
        assert_eq!(corpus.warnings.len(), 1);
        assert_eq!(corpus.warnings[0].doi, "10.1/e");
    }

    #[test]
    fn duplicates_and_malformed_lines_are_rejected() {
        let input = [
            line("10.1/a", &["M1"], "x"),
            "{not json".to_string(),
            line("10.1/a", &["M2"], "y"),
            line("  ", &["M3"], "z"),
        ]
        .join("\n");
        let corpus = ingest(input.as_bytes()).unwrap();
        assert_eq!(corpus.documents.len(), 1);
        assert_eq!(corpus.rejects.len(), 3);
        assert!(corpus.rejects[0].reason.starts_with("malformed record"));
        assert_eq!(corpus.rejects[1].reason, "duplicate doi");
        assert_eq!(corpus.rejects[1].line, 3);
        assert_eq!(corpus.rejects[2].reason, "missing doi");
    }

    #[test]
    fn funnel_filters() {
        let input = [
            line("two-mofs", &["A", "B"], "s\n\nn"),
            line("no-synth", &["C"], "n1\n\nn2"),
            line("keep", &["D"], "intro\n\nsynthesis"),
            line("multi", &["E"], "s1\n\ns2"),
        ]
        .join("\n");
        let corpus = ingest(input.as_bytes()).unwrap();
        let mut labels = BTreeMap::new();
        labels.insert("two-mofs#p0".into(), true);
        labels.insert("two-mofs#p1".into(), false);
        labels.insert("no-synth#p0".into(), false);
        labels.insert("no-synth#p1".into(), false);
        labels.insert("keep#p0".into(), false);
        labels.insert("keep#p1".into(), true);
        labels.insert("multi#p0".into(), true);
        labels.insert("multi#p1".into(), true);
        let (filtered, stats) = apply_pipeline_filters(&corpus, &labels);
        assert_eq!(filtered.selected.len(), 1);
        assert_eq!(filtered.selected[0].doi, "keep");
        assert_eq!(filtered.selected[0].paragraph.index, 1);
        assert_eq!(stats.funnel(), [4, 4, 4, 3, 1]);
        assert_eq!(stats.no_synthesis_paragraph_docs, 1);
        assert_eq!(stats.multi_synthesis_paragraph_docs, 1);
        assert_eq!(stats.unlabeled_paragraphs, 0);
        assert!(stats.funnel().windows(2).all(|w| w[1] <= w[0]));
    }
}

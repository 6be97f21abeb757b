//! Adapters for classifiers hosted outside this process.
//!
//! Both speak JSON. The subprocess adapter writes one `{"text": ...}` line
//! per paragraph to the child's stdin and reads one `{"score": ...}` line
//! back. The HTTP adapter posts `{"texts": [...]}` and expects
//! `{"scores": [...]}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;

use super::{DetectorError, ParagraphClassifier};

struct ChildIo {
    _child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct SubprocessClassifier {
    io: Mutex<ChildIo>,
    threshold: f64,
}

#[derive(Deserialize)]
struct ScoreLine {
    score: f64,
}

impl SubprocessClassifier {
    pub fn spawn(program: &str, args: &[String], threshold: f64) -> Result<Self, DetectorError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().ok_or_else(|| DetectorError::External("no stdin".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| DetectorError::External("no stdout".into()))?;
        Ok(SubprocessClassifier {
            io: Mutex::new(ChildIo { _child: child, stdin, stdout: BufReader::new(stdout) }),
            threshold,
        })
    }
}

impl ParagraphClassifier for SubprocessClassifier {
    fn score(&self, text: &str) -> Result<f64, DetectorError> {
        let mut io = self.io.lock().expect("classifier mutex poisoned");
        let request = serde_json::json!({ "text": text }).to_string();
        writeln!(io.stdin, "{request}")?;
        io.stdin.flush()?;
        let mut line = String::new();
        if io.stdout.read_line(&mut line)? == 0 {
            return Err(DetectorError::External("classifier process closed its output".into()));
        }
        let parsed: ScoreLine = serde_json::from_str(line.trim())
            .map_err(|e| DetectorError::External(format!("bad response line: {e}")))?;
        check_score(parsed.score)
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

pub struct HttpClassifier {
    endpoint: String,
    threshold: f64,
}

#[derive(Deserialize)]
struct ScoresBody {
    scores: Vec<f64>,
}

impl HttpClassifier {
    pub fn new(endpoint: impl Into<String>, threshold: f64) -> Self {
        HttpClassifier { endpoint: endpoint.into(), threshold }
    }

    pub fn score_batch(&self, texts: &[&str]) -> Result<Vec<f64>, DetectorError> {
        let body: ScoresBody = ureq::post(&self.endpoint)
            .send_json(serde_json::json!({ "texts": texts }))
            .map_err(|e| DetectorError::External(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| DetectorError::External(e.to_string()))?;
        if body.scores.len() != texts.len() {
            return Err(DetectorError::External(format!(
                "expected {} scores, got {}",
                texts.len(),
                body.scores.len()
            )));
        }
        body.scores.into_iter().map(check_score).collect()
    }
}

impl ParagraphClassifier for HttpClassifier {
    fn score(&self, text: &str) -> Result<f64, DetectorError> {
        Ok(self.score_batch(&[text])?[0])
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

fn check_score(score: f64) -> Result<f64, DetectorError> {
    if (0.0..=1.0).contains(&score) {
        Ok(score)
    } else {
        Err(DetectorError::External(format!("score {score} outside [0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subprocess_protocol() {
        // A shell loop answering every request with a fixed score.
        let script = "while read -r line; do echo '{\"score\": 0.75}'; done".to_string();
        let clf = SubprocessClassifier::spawn("sh", &["-c".into(), script], 0.5).unwrap();
        let c = clf.classify("anything").unwrap();
        assert_eq!(c.score, 0.75);
        assert!(c.label);
        assert_eq!(clf.score("again").unwrap(), 0.75);
    }

    #[test]
    fn out_of_range_scores_are_errors() {
        assert!(check_score(1.5).is_err());
        assert!(check_score(-0.1).is_err());
        assert_eq!(check_score(0.0).unwrap(), 0.0);
    }
}

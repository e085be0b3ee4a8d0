//! Score streams: per-frame anomaly scores with ground-truth labels.
//!
//! Persisted as JSONL, one `{"t": .., "z": .., "y": 0|1}` object per line.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub t: u64,
    pub z: f64,
    pub y: Label,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreStream {
    pub records: Vec<ScoreRecord>,
}

impl ScoreStream {
    pub fn new(records: Vec<ScoreRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.z).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.y).collect()
    }

    /// Scores of the records carrying `label`, in stream order.
    pub fn scores_with(&self, label: Label) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.y == label)
            .map(|r| r.z)
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            // Serializing a plain struct of numbers cannot fail.
            out.push_str(&serde_json::to_string(r).expect("score record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read_lines(text.as_bytes())
    }

    fn read_lines(reader: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScoreRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            if !rec.z.is_finite() {
                return Err(Error::Format(format!("line {}: non-finite score", lineno + 1)));
            }
            records.push(rec);
        }
        Ok(Self { records })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_lines(BufReader::new(f)).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_schema_and_roundtrip() {
        let s = ScoreStream::new(vec![
            ScoreRecord { t: 0, z: 0.25, y: Label::Normal },
            ScoreRecord { t: 1, z: 1.0 / 3.0, y: Label::Anomaly },
        ]);
        let text = s.to_jsonl();
        assert_eq!(text.lines().next().unwrap(), r#"{"t":0,"z":0.25,"y":0}"#);
        assert_eq!(ScoreStream::from_jsonl(&text).unwrap(), s);
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(ScoreStream::from_jsonl(r#"{"t":0,"z":0.1,"y":2}"#).is_err());
    }
}

//! Documents and corpus ingestion.
//!
//! Two input layouts are accepted: JSON lines with a required `text` field and
//! optional `id`, or bare text with one document per line. Bare-text ids are
//! the 1-based line numbers.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::RankError;

/// A unit of retrieval. `text` is what the ranker sees unless a summary is
/// attached, in which case the summary is ranked and `text` is kept as-is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub origin_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, origin_index: usize) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            origin_index,
            summary: None,
        }
    }

    /// Build a corpus from plain strings, using the position as both id and origin.
    pub fn from_texts<I, S>(texts: I) -> Vec<Document>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| Document::new(i.to_string(), t, i))
            .collect()
    }

    pub fn ranking_text(&self) -> &str {
        match &self.summary {
            Some(s) if !s.trim().is_empty() => s,
            _ => &self.text,
        }
    }
}

/// Check corpus preconditions: non-empty, unique ids, non-empty text.
pub fn validate_corpus(corpus: &[Document]) -> Result<(), RankError> {
    if corpus.is_empty() {
        return Err(RankError::EmptyCorpus);
    }
    let mut seen = HashSet::with_capacity(corpus.len());
    for doc in corpus {
        if !seen.insert(doc.id.as_str()) {
            return Err(RankError::DuplicateId(doc.id.clone()));
        }
        if doc.text.trim().is_empty() {
            return Err(RankError::EmptyText(doc.id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate document id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("input contains no documents")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    /// JSON lines when the path ends in `.jsonl`/`.ndjson` or the first
    /// non-blank line opens a JSON object; bare text otherwise.
    #[default]
    Auto,
    JsonLines,
    Text,
}

#[derive(Deserialize)]
struct JsonRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    text: String,
    #[serde(default)]
    summary: Option<String>,
}

pub fn load_documents(path: &Path, format: InputFormat) -> Result<Vec<Document>, InputError> {
    let file = std::fs::File::open(path)?;
    let format = match format {
        InputFormat::Auto => match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson") => InputFormat::JsonLines,
            _ => InputFormat::Auto,
        },
        other => other,
    };
    read_documents(std::io::BufReader::new(file), format)
}

pub fn read_documents<R: BufRead>(reader: R, format: InputFormat) -> Result<Vec<Document>, InputError> {
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let format = match format {
        InputFormat::Auto => {
            let first = lines.iter().map(|l| l.trim()).find(|l| !l.is_empty());
            match first {
                Some(l) if l.starts_with('{') => InputFormat::JsonLines,
                _ => InputFormat::Text,
            }
        }
        other => other,
    };

    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in lines.iter().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let doc = match format {
            InputFormat::JsonLines => {
                let rec: JsonRecord = serde_json::from_str(trimmed).map_err(|e| InputError::Parse {
                    line,
                    message: e.to_string(),
                })?;
                if rec.text.trim().is_empty() {
                    return Err(InputError::Parse {
                        line,
                        message: "`text` is empty".into(),
                    });
                }
                let id = match rec.id {
                    None | Some(serde_json::Value::Null) => line.to_string(),
                    Some(serde_json::Value::String(s)) if !s.is_empty() => s,
                    Some(serde_json::Value::Number(n)) => n.to_string(),
                    Some(other) => {
                        return Err(InputError::Parse {
                            line,
                            message: format!("`id` must be a non-empty string or number, got {other}"),
                        })
                    }
                };
                let mut doc = Document::new(id, rec.text, docs.len());
                doc.summary = rec.summary.filter(|s| !s.trim().is_empty());
                doc
            }
            _ => Document::new(line.to_string(), trimmed, docs.len()),
        };
        if !seen.insert(doc.id.clone()) {
            return Err(InputError::DuplicateId { line, id: doc.id });
        }
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(InputError::Empty);
    }
    Ok(docs)
}

//! Corpus and query ingestion from line-delimited JSON.
//!
//! Corpus lines carry `code` plus an `id` (or, as in raw CodeSearchNet
//! files, a `url` used as the id). Query lines carry `query` and the
//! ground-truth document as `gt_id` or `url`. Invalid UTF-8 is replaced
//! rather than rejected.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::textprep::{preprocess, PrepConfig, TokenStream};

/// One searchable code snippet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeDocument {
    pub id: String,
    pub language: String,
    pub code: String,
    /// Empty until [`Corpus::preprocess`] runs.
    #[serde(default)]
    pub tokens: TokenStream,
}

/// Documents in file order. The position of a document is its ordinal,
/// which every ranking uses to break ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub language: String,
    documents: Vec<CodeDocument>,
    #[serde(skip)]
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(language: impl Into<String>, documents: Vec<CodeDocument>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(documents.len());
        for (ordinal, doc) in documents.iter().enumerate() {
            if doc.id.is_empty() {
                return Err(Error::invalid(format!("document {ordinal} has an empty id")));
            }
            if by_id.insert(doc.id.clone(), ordinal).is_some() {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Self {
            language: language.into(),
            documents,
            by_id,
        })
    }

    /// Convenience constructor for in-memory corpora: ids are `d0`, `d1`, ...
    pub fn from_texts<S: AsRef<str>>(language: &str, texts: &[S]) -> Self {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| CodeDocument {
                id: format!("d{i}"),
                language: language.to_string(),
                code: t.as_ref().to_string(),
                tokens: TokenStream::default(),
            })
            .collect();
        Self::new(language, docs).expect("generated ids are unique")
    }

    pub fn documents(&self) -> &[CodeDocument] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, ordinal: usize) -> Option<&CodeDocument> {
        self.documents.get(ordinal)
    }

    pub fn ordinal_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn id_of(&self, ordinal: usize) -> &str {
        &self.documents[ordinal].id
    }

    /// Fills every document's token stream.
    pub fn preprocess(&mut self, cfg: PrepConfig) {
        for doc in &mut self.documents {
            doc.tokens = preprocess(&doc.code, cfg);
        }
    }

    pub(crate) fn rebuild_lookup(&mut self) -> Result<()> {
        let docs = std::mem::take(&mut self.documents);
        *self = Corpus::new(std::mem::take(&mut self.language), docs)?;
        Ok(())
    }
}

/// A natural-language query with its single ground-truth document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub text: String,
    pub gt_id: String,
    /// Ordinal of `gt_id` in the corpus the query was resolved against.
    pub gt_ordinal: usize,
    #[serde(default)]
    pub tokens: TokenStream,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(String::from_utf8_lossy(&bytes)
        .lines()
        .map(str::to_owned)
        .collect())
}

fn parse_object(path: &Path, line_no: usize, line: &str) -> Result<serde_json::Map<String, Value>> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(parse_err("expected a JSON object".into())),
        Err(e) => Err(parse_err(e.to_string())),
    }
}

fn string_field(map: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    match map.get(key)? {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Loads a corpus file; `language` applies to records without their own tag.
pub fn load_corpus(path: impl AsRef<Path>, language: &str) -> Result<Corpus> {
    let path = path.as_ref();
    let mut documents = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let map = parse_object(path, line_no, line)?;
        let err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: message.to_string(),
        };
        let id = string_field(&map, "id")
            .or_else(|| string_field(&map, "url"))
            .ok_or_else(|| err("record has neither `id` nor `url`"))?;
        let code = match map.get("code") {
            Some(Value::String(s)) => s.clone(),
            _ => return Err(err("record has no string `code` field")),
        };
        let language = string_field(&map, "language").unwrap_or_else(|| language.to_string());
        documents.push(CodeDocument {
            id,
            language,
            code,
            tokens: TokenStream::default(),
        });
    }
    Corpus::new(language, documents)
}

/// Loads a query file and resolves each ground truth against `corpus`.
///
/// Queries without an `id` are named by their 1-based line number.
pub fn load_queries(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Vec<QueryRecord>> {
    let path = path.as_ref();
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let map = parse_object(path, line_no, line)?;
        let err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: message.to_string(),
        };
        let id = string_field(&map, "id").unwrap_or_else(|| line_no.to_string());
        if !seen.insert(id.clone()) {
            return Err(err(&format!("duplicate query id `{id}`")));
        }
        let text = match map.get("query") {
            Some(Value::String(s)) => s.clone(),
            _ => return Err(err("record has no string `query` field")),
        };
        let gt_id = string_field(&map, "gt_id")
            .or_else(|| string_field(&map, "url"))
            .ok_or_else(|| err("record has neither `gt_id` nor `url`"))?;
        let gt_ordinal = corpus
            .ordinal_of(&gt_id)
            .ok_or_else(|| Error::UnknownGroundTruth {
                query_id: id.clone(),
                gt_id: gt_id.clone(),
            })?;
        queries.push(QueryRecord {
            id,
            text,
            gt_id,
            gt_ordinal,
            tokens: TokenStream::default(),
        });
    }
    Ok(queries)
}

/// Fills the token streams of `queries` with the given config.
pub fn preprocess_queries(queries: &mut [QueryRecord], cfg: PrepConfig) {
    for q in queries {
        q.tokens = preprocess(&q.text, cfg);
    }
}

//! Text-matching channels over a shared inverted index.
//!
//! * **Jaccard** on token sets.
//! * **BOW**: cosine of raw count vectors.
//! * **TF-IDF**: cosine of `tf * idf` vectors with smoothed
//!   `idf = ln((1 + N) / (1 + df)) + 1`; query terms outside the corpus
//!   vocabulary are dropped, as a corpus-fitted vectorizer would.
//! * **BM25** (Okapi):
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf · (k1 + 1) / (tf + k1 · (1 − b + b · |d| / avgdl))
//! idf(t)      = ln((N − df + 0.5) / (df + 0.5)), negatives floored to ε · mean(positive idf)
//! ```
//!
//! The sum runs over query token occurrences, so repeated query terms count
//! repeatedly.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::persist;
use crate::ranking::RankedList;
use crate::textprep::{preprocess, PrepConfig, TokenStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexicalMethod {
    Jaccard,
    Bow,
    Tfidf,
    Bm25,
}

impl LexicalMethod {
    pub const ALL: [LexicalMethod; 4] = [Self::Jaccard, Self::Bow, Self::Tfidf, Self::Bm25];

    pub fn name(self) -> &'static str {
        match self {
            Self::Jaccard => "jaccard",
            Self::Bow => "bow",
            Self::Tfidf => "tfidf",
            Self::Bm25 => "bm25",
        }
    }
}

impl fmt::Display for LexicalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LexicalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Unknown {
                what: "lexical method",
                name: s.to_string(),
                expected: "jaccard, bow, tfidf, bm25".into(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    /// Negative idf values are replaced by `epsilon` times the mean positive idf.
    pub epsilon: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: 1.5,
            b: 0.75,
            epsilon: 0.25,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        // written so that NaN fails every check
        let non_negative = |x: f64| x >= 0.0;
        if !non_negative(self.k1) || !(0.0..=1.0).contains(&self.b) || !non_negative(self.epsilon) {
            return Err(Error::invalid(format!(
                "bm25 parameters out of range: k1={} b={} epsilon={}",
                self.k1, self.b, self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

#[derive(Serialize, Deserialize)]
struct IndexData {
    terms: Vec<String>,
    postings: Vec<Vec<(u32, u32)>>,
    doc_lengths: Vec<u32>,
}

/// Immutable inverted index plus the per-document statistics each scorer needs.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    prep: PrepConfig,
    terms: Vec<String>,
    vocabulary: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avgdl: f64,
    doc_distinct: Vec<u32>,
    bow_norms: Vec<f64>,
    tfidf_idf: Vec<f64>,
    tfidf_norms: Vec<f64>,
    bm25_raw_idf: Vec<f64>,
    bm25_mean_positive_idf: f64,
}

impl PartialEq for InvertedIndex {
    fn eq(&self, other: &Self) -> bool {
        self.prep == other.prep
            && self.terms == other.terms
            && self.postings == other.postings
            && self.doc_lengths == other.doc_lengths
    }
}

/// Distinct query terms in first-occurrence order.
struct QueryTerms {
    /// `(term id if in vocabulary, occurrences)`
    terms: Vec<(Option<u32>, u32)>,
}

impl InvertedIndex {
    /// Preprocesses every document's code with `prep` and indexes the result.
    pub fn build(corpus: &Corpus, prep: PrepConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let docs: Vec<TokenStream> = corpus
            .documents()
            .par_iter()
            .map(|d| preprocess(&d.code, prep))
            .collect();
        Self::from_token_streams(&docs, prep)
    }

    /// Indexes already-preprocessed documents.
    pub fn from_token_streams(docs: &[TokenStream], prep: PrepConfig) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut terms = Vec::new();
        let mut vocabulary: HashMap<String, u32> = HashMap::new();
        let mut postings: Vec<Vec<Posting>> = Vec::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (ordinal, doc) in docs.iter().enumerate() {
            let mut counts: Vec<(u32, u32)> = Vec::new();
            let mut local: HashMap<u32, usize> = HashMap::new();
            for tok in doc {
                let id = match vocabulary.get(tok.as_str()) {
                    Some(&id) => id,
                    None => {
                        let id = terms.len() as u32;
                        terms.push(tok.clone());
                        vocabulary.insert(tok.clone(), id);
                        postings.push(Vec::new());
                        id
                    }
                };
                match local.get(&id) {
                    Some(&slot) => counts[slot].1 += 1,
                    None => {
                        local.insert(id, counts.len());
                        counts.push((id, 1));
                    }
                }
            }
            for (id, tf) in counts {
                postings[id as usize].push(Posting {
                    ordinal: ordinal as u32,
                    tf,
                });
            }
            doc_lengths.push(doc.len() as u32);
        }
        Ok(Self::finish(prep, terms, vocabulary, postings, doc_lengths))
    }

    fn finish(
        prep: PrepConfig,
        terms: Vec<String>,
        vocabulary: HashMap<String, u32>,
        postings: Vec<Vec<Posting>>,
        doc_lengths: Vec<u32>,
    ) -> Self {
        let n = doc_lengths.len();
        let nf = n as f64;
        let avgdl = doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / nf;

        let tfidf_idf: Vec<f64> = postings
            .iter()
            .map(|p| ((1.0 + nf) / (1.0 + p.len() as f64)).ln() + 1.0)
            .collect();
        let bm25_raw_idf: Vec<f64> = postings
            .iter()
            .map(|p| {
                let df = p.len() as f64;
                ((nf - df + 0.5) / (df + 0.5)).ln()
            })
            .collect();
        let positive: Vec<f64> = bm25_raw_idf.iter().copied().filter(|&v| v > 0.0).collect();
        let bm25_mean_positive_idf = if positive.is_empty() {
            0.0
        } else {
            positive.iter().sum::<f64>() / positive.len() as f64
        };

        let mut doc_distinct = vec![0u32; n];
        let mut bow_sq = vec![0.0f64; n];
        let mut tfidf_sq = vec![0.0f64; n];
        for (term, list) in postings.iter().enumerate() {
            let idf = tfidf_idf[term];
            for p in list {
                let o = p.ordinal as usize;
                let tf = p.tf as f64;
                doc_distinct[o] += 1;
                bow_sq[o] += tf * tf;
                tfidf_sq[o] += (tf * idf) * (tf * idf);
            }
        }
        Self {
            prep,
            terms,
            vocabulary,
            postings,
            doc_lengths,
            avgdl,
            doc_distinct,
            bow_norms: bow_sq.into_iter().map(f64::sqrt).collect(),
            tfidf_idf,
            tfidf_norms: tfidf_sq.into_iter().map(f64::sqrt).collect(),
            bm25_raw_idf,
            bm25_mean_positive_idf,
        }
    }

    pub fn prep(&self) -> PrepConfig {
        self.prep
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn doc_length(&self, ordinal: usize) -> usize {
        self.doc_lengths[ordinal] as usize
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avgdl
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn term_id(&self, token: &str) -> Option<u32> {
        self.vocabulary.get(token).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.term_id(token)
            .map(|id| self.postings[id as usize].as_slice())
            .unwrap_or(&[])
    }

    pub fn document_frequency(&self, token: &str) -> usize {
        self.postings(token).len()
    }

    /// Preprocesses raw query text with the build-time config.
    pub fn prepare_query(&self, text: &str) -> TokenStream {
        preprocess(text, self.prep)
    }

    /// BM25 idf after the negative-value floor.
    pub fn bm25_idf(&self, term: u32, params: &Bm25Params) -> f64 {
        let raw = self.bm25_raw_idf[term as usize];
        if raw < 0.0 {
            params.epsilon * self.bm25_mean_positive_idf
        } else {
            raw
        }
    }

    fn query_terms(&self, q: &TokenStream) -> QueryTerms {
        let mut terms: Vec<(Option<u32>, u32)> = Vec::new();
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for tok in q {
            match seen.get(tok.as_str()) {
                Some(&slot) => terms[slot].1 += 1,
                None => {
                    seen.insert(tok.as_str(), terms.len());
                    terms.push((self.term_id(tok), 1));
                }
            }
        }
        QueryTerms { terms }
    }

    fn tf(&self, term: u32, ordinal: usize) -> u32 {
        let list = &self.postings[term as usize];
        list.binary_search_by_key(&(ordinal as u32), |p| p.ordinal)
            .map(|i| list[i].tf)
            .unwrap_or(0)
    }

    fn bm25_term(&self, idf: f64, tf: f64, doc_len: f64, params: &Bm25Params) -> f64 {
        let norm = if self.avgdl > 0.0 {
            doc_len / self.avgdl
        } else {
            0.0
        };
        idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
    }

    /// Scores one document; `ordinal` must be below `doc_count()`.
    pub fn score(&self, method: LexicalMethod, q: &TokenStream, ordinal: usize) -> f64 {
        self.score_with(method, q, ordinal, &Bm25Params::default())
    }

    pub fn score_with(
        &self,
        method: LexicalMethod,
        q: &TokenStream,
        ordinal: usize,
        params: &Bm25Params,
    ) -> f64 {
        let qt = self.query_terms(q);
        let tfs: Vec<u32> = qt
            .terms
            .iter()
            .map(|&(id, _)| id.map_or(0, |id| self.tf(id, ordinal)))
            .collect();
        let mut acc = Accumulator::new(method, &qt, self, params);
        for (slot, &tf) in tfs.iter().enumerate() {
            if tf > 0 {
                acc.add(slot, ordinal, tf);
            }
        }
        acc.finish(ordinal)
    }

    /// Scores every document.
    pub fn score_all(&self, method: LexicalMethod, q: &TokenStream, params: &Bm25Params) -> Vec<f64> {
        let qt = self.query_terms(q);
        let mut acc = Accumulator::new(method, &qt, self, params);
        for (slot, &(id, _)) in qt.terms.iter().enumerate() {
            if let Some(id) = id {
                for p in &self.postings[id as usize] {
                    acc.add(slot, p.ordinal as usize, p.tf);
                }
            }
        }
        (0..self.doc_count()).map(|o| acc.finish(o)).collect()
    }

    /// BM25 of `q` against an arbitrary token list, using this index's
    /// corpus statistics (N, df, avgdl). For an indexed document's own
    /// tokens this equals [`InvertedIndex::score_with`] exactly.
    pub fn bm25_external(&self, q: &TokenStream, doc: &TokenStream, params: &Bm25Params) -> f64 {
        let qt = self.query_terms(q);
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for tok in doc {
            *tf.entry(tok.as_str()).or_default() += 1;
        }
        let doc_len = doc.len() as f64;
        let mut score = 0.0;
        for &(id, count) in &qt.terms {
            let Some(id) = id else { continue };
            let f = tf.get(self.term(id)).copied().unwrap_or(0);
            if f > 0 {
                score += count as f64 * self.bm25_term(self.bm25_idf(id, params), f as f64, doc_len, params);
            }
        }
        score
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        persist::save_artifact(path, self.prep, &self.to_data())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (prep, data) = persist::load_artifact(path)?;
        Self::from_data(prep, data)
    }

    fn to_data(&self) -> IndexData {
        IndexData {
            terms: self.terms.clone(),
            postings: self
                .postings
                .iter()
                .map(|l| l.iter().map(|p| (p.ordinal, p.tf)).collect())
                .collect(),
            doc_lengths: self.doc_lengths.clone(),
        }
    }

    fn from_data(prep: PrepConfig, data: IndexData) -> Result<Self> {
        if data.terms.len() != data.postings.len() || data.doc_lengths.is_empty() {
            return Err(Error::Corrupt("inconsistent index payload".into()));
        }
        let vocabulary: HashMap<String, u32> = data
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if vocabulary.len() != data.terms.len() {
            return Err(Error::Corrupt("duplicate terms in index payload".into()));
        }
        let n = data.doc_lengths.len() as u32;
        let postings: Vec<Vec<Posting>> = data
            .postings
            .into_iter()
            .map(|l| l.into_iter().map(|(ordinal, tf)| Posting { ordinal, tf }).collect())
            .collect();
        if postings
            .iter()
            .any(|l: &Vec<Posting>| l.iter().any(|p| p.ordinal >= n) || !l.windows(2).all(|w| w[0].ordinal < w[1].ordinal))
        {
            return Err(Error::Corrupt("invalid postings in index payload".into()));
        }
        Ok(Self::finish(prep, data.terms, vocabulary, postings, data.doc_lengths))
    }
}

/// Per-method accumulation shared by single-document and whole-corpus scoring,
/// so both paths perform identical floating-point operations.
struct Accumulator<'a> {
    method: LexicalMethod,
    index: &'a InvertedIndex,
    params: Bm25Params,
    query: &'a [(Option<u32>, u32)],
    query_distinct: f64,
    query_norm: f64,
    query_tfidf: Vec<f64>,
    sums: Vec<f64>,
}

impl<'a> Accumulator<'a> {
    fn new(method: LexicalMethod, qt: &'a QueryTerms, index: &'a InvertedIndex, params: &Bm25Params) -> Self {
        let query = qt.terms.as_slice();
        let query_distinct = query.len() as f64;
        let (query_norm, query_tfidf) = match method {
            LexicalMethod::Bow => (
                query.iter().map(|&(_, c)| (c as f64) * (c as f64)).sum::<f64>().sqrt(),
                Vec::new(),
            ),
            LexicalMethod::Tfidf => {
                let w: Vec<f64> = query
                    .iter()
                    .map(|&(id, c)| id.map_or(0.0, |id| c as f64 * index.tfidf_idf[id as usize]))
                    .collect();
                (w.iter().map(|x| x * x).sum::<f64>().sqrt(), w)
            }
            _ => (0.0, Vec::new()),
        };
        Self {
            method,
            index,
            params: *params,
            query,
            query_distinct,
            query_norm,
            query_tfidf,
            sums: vec![0.0; index.doc_count()],
        }
    }

    fn add(&mut self, slot: usize, ordinal: usize, tf: u32) {
        let (id, count) = self.query[slot];
        let id = id.expect("only in-vocabulary terms have postings");
        let tf = tf as f64;
        let contribution = match self.method {
            LexicalMethod::Jaccard => 1.0,
            LexicalMethod::Bow => count as f64 * tf,
            LexicalMethod::Tfidf => self.query_tfidf[slot] * tf * self.index.tfidf_idf[id as usize],
            LexicalMethod::Bm25 => {
                let idf = self.index.bm25_idf(id, &self.params);
                let dl = self.index.doc_lengths[ordinal] as f64;
                count as f64 * self.index.bm25_term(idf, tf, dl, &self.params)
            }
        };
        self.sums[ordinal] += contribution;
    }

    fn finish(&self, ordinal: usize) -> f64 {
        let sum = self.sums[ordinal];
        match self.method {
            LexicalMethod::Jaccard => {
                let union = self.query_distinct + self.index.doc_distinct[ordinal] as f64 - sum;
                if union == 0.0 {
                    0.0
                } else {
                    sum / union
                }
            }
            LexicalMethod::Bow => cosine(sum, self.query_norm, self.index.bow_norms[ordinal]),
            LexicalMethod::Tfidf => cosine(sum, self.query_norm, self.index.tfidf_norms[ordinal]),
            LexicalMethod::Bm25 => sum,
        }
    }
}

fn cosine(dot: f64, a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        (dot / (a * b)).clamp(0.0, 1.0)
    }
}

/// Top-`k` documents for `q` under `method`; ties go to the lower ordinal.
pub fn top_k_lexical(index: &InvertedIndex, q: &TokenStream, method: LexicalMethod, k: usize) -> Result<RankedList> {
    top_k_lexical_with(index, q, method, k, &Bm25Params::default())
}

pub fn top_k_lexical_with(
    index: &InvertedIndex,
    q: &TokenStream,
    method: LexicalMethod,
    k: usize,
    params: &Bm25Params,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    params.validate()?;
    let scores = index.score_all(method, q, params);
    Ok(RankedList::from_scores(&scores, k))
}

//! Second-stage pair scoring: one real per `(query, code)` pair, higher is better.
//!
//! Scorers see the raw query and code text. The [`ScorerHandle`] wrapper
//! batches requests and counts every scored pair, which is how the
//! two-stage cost contract is checked.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::adapter::{AdapterProcess, AdapterType, BATCH_LIMIT};
use crate::error::{Error, Result};
use crate::lexical::{Bm25Params, InvertedIndex};

#[derive(Debug, Clone, Copy)]
pub struct PairQuery<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

#[derive(Debug, Clone, Copy)]
pub struct PairCode<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

pub trait PairScorer: Send + Sync {
    fn name(&self) -> String;

    /// Scores at most one batch; output is aligned with `codes`.
    fn score_batch(&self, query: &PairQuery<'_>, codes: &[PairCode<'_>]) -> Result<Vec<f64>>;
}

/// Batching, alignment checks and invocation accounting around a scorer.
pub struct ScorerHandle {
    inner: Arc<dyn PairScorer>,
    batch_size: usize,
    invocations: AtomicU64,
}

impl ScorerHandle {
    pub fn new(inner: Arc<dyn PairScorer>) -> Self {
        Self::with_batch_size(inner, BATCH_LIMIT)
    }

    pub fn with_batch_size(inner: Arc<dyn PairScorer>, batch_size: usize) -> Self {
        assert!(batch_size >= 1);
        Self {
            inner,
            batch_size,
            invocations: AtomicU64::new(0),
        }
    }

    pub fn name(&self) -> String {
        self.inner.name()
    }

    /// Total pairs scored since creation or the last [`reset_invocations`](Self::reset_invocations).
    pub fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::SeqCst)
    }

    pub fn reset_invocations(&self) {
        self.invocations.store(0, Ordering::SeqCst);
    }

    pub fn score_pairs(&self, query: &PairQuery<'_>, codes: &[PairCode<'_>]) -> Result<Vec<f64>> {
        if codes.is_empty() {
            return Err(Error::invalid("no code snippets to score"));
        }
        let mut scores = Vec::with_capacity(codes.len());
        for batch in codes.chunks(self.batch_size) {
            let out = self.inner.score_batch(query, batch)?;
            if out.len() != batch.len() {
                return Err(Error::Adapter(format!(
                    "scorer `{}` returned {} scores for {} pairs",
                    self.inner.name(),
                    out.len(),
                    batch.len()
                )));
            }
            if let Some(bad) = out.iter().find(|s| s.is_nan()) {
                return Err(Error::Adapter(format!("scorer `{}` returned {bad}", self.inner.name())));
            }
            self.invocations.fetch_add(batch.len() as u64, Ordering::SeqCst);
            scores.extend(out);
        }
        Ok(scores)
    }
}

/// BM25 of the preprocessed query against each preprocessed code text,
/// using the corpus statistics of a built index.
pub struct StubScorer {
    index: Arc<InvertedIndex>,
    params: Bm25Params,
}

impl StubScorer {
    pub fn new(index: Arc<InvertedIndex>) -> Self {
        Self::with_params(index, Bm25Params::default())
    }

    pub fn with_params(index: Arc<InvertedIndex>, params: Bm25Params) -> Self {
        Self { index, params }
    }
}

impl PairScorer for StubScorer {
    fn name(&self) -> String {
        "stub".into()
    }

    fn score_batch(&self, query: &PairQuery<'_>, codes: &[PairCode<'_>]) -> Result<Vec<f64>> {
        let q = self.index.prepare_query(query.text);
        Ok(codes
            .iter()
            .map(|c| {
                let d = self.index.prepare_query(c.text);
                self.index.bm25_external(&q, &d, &self.params)
            })
            .collect())
    }
}

/// Gives 1.0 to the active query's ground-truth document and 0.0 to everything else.
pub struct OracleScorer {
    gt: HashMap<String, String>,
}

impl OracleScorer {
    pub fn new(gt: HashMap<String, String>) -> Self {
        Self { gt }
    }
}

impl PairScorer for OracleScorer {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn score_batch(&self, query: &PairQuery<'_>, codes: &[PairCode<'_>]) -> Result<Vec<f64>> {
        let gt = self.gt.get(query.id);
        Ok(codes
            .iter()
            .map(|c| if gt.is_some_and(|g| g == c.id) { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Same score for every pair.
pub struct ConstantScorer(pub f64);

impl PairScorer for ConstantScorer {
    fn name(&self) -> String {
        format!("constant:{}", self.0)
    }

    fn score_batch(&self, _query: &PairQuery<'_>, codes: &[PairCode<'_>]) -> Result<Vec<f64>> {
        Ok(vec![self.0; codes.len()])
    }
}

/// Pair scorer running in an external adapter process; requests are serialized.
pub struct AdapterScorer {
    command: String,
    process: Mutex<AdapterProcess>,
}

impl AdapterScorer {
    pub fn spawn(command: &str) -> Result<Self> {
        let process = AdapterProcess::spawn(command)?;
        if process.info().kind != AdapterType::PairScorer {
            return Err(Error::Adapter(format!("`{command}` is not a pair scorer")));
        }
        Ok(Self {
            command: command.to_string(),
            process: Mutex::new(process),
        })
    }
}

impl PairScorer for AdapterScorer {
    fn name(&self) -> String {
        format!("adapter:{}", self.command)
    }

    fn score_batch(&self, query: &PairQuery<'_>, codes: &[PairCode<'_>]) -> Result<Vec<f64>> {
        let pairs: Vec<(&str, &str)> = codes.iter().map(|c| (query.text, c.text)).collect();
        let mut process = self.process.lock().unwrap_or_else(|p| p.into_inner());
        process.score(&pairs)
    }
}

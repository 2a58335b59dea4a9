//! Ranked result lists shared by every channel, the reranker and fusion.
//!
//! Documents are identified by their corpus ordinal. Ordering is always
//! score descending, then ordinal ascending, so rankings are total and
//! reproducible.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// One scored document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub ordinal: usize,
    pub score: f64,
}

/// Canonical ranking order: higher score first, lower ordinal on ties.
pub fn rank_order(a: &Hit, b: &Hit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.ordinal.cmp(&b.ordinal))
}

/// Ordered `(document, score)` pairs with no duplicate documents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    hits: Vec<Hit>,
}

impl RankedList {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Sorts `hits` into canonical order and keeps at most `k` of them.
    ///
    /// Callers must not pass duplicate ordinals.
    pub fn from_unsorted(mut hits: Vec<Hit>, k: usize) -> Self {
        debug_assert!(!hits.iter().any(|h| h.score.is_nan()));
        if k < hits.len() {
            if k > 0 {
                hits.select_nth_unstable_by(k - 1, rank_order);
            }
            hits.truncate(k);
        }
        hits.sort_unstable_by(rank_order);
        Self { hits }
    }

    /// Builds the top-`k` list from a dense per-ordinal score vector.
    pub fn from_scores(scores: &[f64], k: usize) -> Self {
        let hits = scores
            .iter()
            .enumerate()
            .map(|(ordinal, &score)| Hit { ordinal, score })
            .collect();
        Self::from_unsorted(hits, k)
    }

    pub fn hits(&self) -> &[Hit] {
        &self.hits
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn ordinals(&self) -> impl Iterator<Item = usize> + '_ {
        self.hits.iter().map(|h| h.ordinal)
    }

    /// 1-based position of `ordinal`, if present.
    pub fn rank_of(&self, ordinal: usize) -> Option<usize> {
        self.hits
            .iter()
            .position(|h| h.ordinal == ordinal)
            .map(|p| p + 1)
    }

    pub fn score_of(&self, ordinal: usize) -> Option<f64> {
        self.hits
            .iter()
            .find(|h| h.ordinal == ordinal)
            .map(|h| h.score)
    }

    pub fn truncated(&self, k: usize) -> Self {
        Self {
            hits: self.hits.iter().take(k).copied().collect(),
        }
    }
}

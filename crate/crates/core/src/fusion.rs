//! Two-stage search: several cheap channels recall top-K candidates each,
//! their union is scored by a pair scorer, and the result is returned in
//! score order. Documents outside the union never appear in the output.
//!
//! The classic score-fusion baselines (CombSUM, CombMNZ, CombANZ, Max, Min,
//! Borda count) are here too, for comparison against reranking.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crossrank::{PairCode, PairQuery, ScorerHandle};
use crate::dense::{embed_query, top_k_dense, DenseMetric};
use crate::engine::{SearchIndex, SearchQuery};
use crate::error::{Error, Result};
use crate::lexical::{top_k_lexical_with, LexicalMethod};
use crate::ranking::{Hit, RankedList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    Lexical(LexicalMethod),
    Dense(DenseMetric),
}

const CHANNEL_KINDS: &str = "jaccard, bow, tfidf, bm25, dense, dense-dot";

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bare = s.strip_prefix("lexical-").unwrap_or(s);
        if let Ok(m) = bare.parse::<LexicalMethod>() {
            return Ok(Self::Lexical(m));
        }
        match s {
            "dense" | "dense-cosine" => Ok(Self::Dense(DenseMetric::Cosine)),
            "dense-dot" => Ok(Self::Dense(DenseMetric::Dot)),
            _ => Err(Error::Unknown {
                what: "channel kind",
                name: s.to_string(),
                expected: CHANNEL_KINDS.into(),
            }),
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lexical(m) => write!(f, "{m}"),
            Self::Dense(DenseMetric::Cosine) => f.write_str("dense"),
            Self::Dense(DenseMetric::Dot) => f.write_str("dense-dot"),
        }
    }
}

/// One first-stage channel and its recall depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSpec {
    pub name: String,
    pub kind: ChannelKind,
    /// `usize::MAX` means the whole corpus.
    pub k: usize,
}

impl ChannelSpec {
    pub fn new(name: impl Into<String>, kind: ChannelKind, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("channel K must be at least 1"));
        }
        Ok(Self {
            name: name.into(),
            kind,
            k,
        })
    }
}

/// Parses `name:kind:K` or `kind:K`; K may be a number, `all`, or `K=<value>`.
impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let (name, kind, k) = match parts.as_slice() {
            [name, kind, k] => (*name, *kind, *k),
            [kind, k] => (*kind, *kind, *k),
            _ => {
                return Err(Error::invalid(format!(
                    "channel `{s}` is not of the form name:kind:K"
                )))
            }
        };
        let k = k.strip_prefix("K=").or_else(|| k.strip_prefix("k=")).unwrap_or(k);
        let k = if k == "all" {
            usize::MAX
        } else {
            k.parse::<usize>()
                .map_err(|_| Error::invalid(format!("channel `{s}`: K must be a positive integer or `all`")))?
        };
        if name.is_empty() {
            return Err(Error::invalid(format!("channel `{s}` has an empty name")));
        }
        ChannelSpec::new(name, kind.parse()?, k)
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.k == usize::MAX {
            write!(f, "{}:{}:all", self.name, self.kind)
        } else {
            write!(f, "{}:{}:{}", self.name, self.kind, self.k)
        }
    }
}

/// Fails on an empty channel list or duplicate channel names.
pub fn validate_channels(channels: &[ChannelSpec]) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::invalid("at least one channel is required"));
    }
    let mut seen = HashSet::new();
    for c in channels {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::invalid(format!("duplicate channel name `{}`", c.name)));
        }
    }
    Ok(())
}

/// First-stage top-K of one channel.
pub fn recall_channel(index: &SearchIndex, query: &SearchQuery, channel: &ChannelSpec) -> Result<RankedList> {
    match channel.kind {
        ChannelKind::Lexical(method) => top_k_lexical_with(&index.lexical, &query.tokens, method, channel.k, &index.bm25),
        ChannelKind::Dense(metric) => {
            let (matrix, provider) = match (&index.embeddings, &index.provider) {
                (Some(m), Some(p)) => (m, p),
                (None, _) => {
                    return Err(Error::invalid(format!(
                        "channel `{}` needs corpus embeddings, but none were built",
                        channel.name
                    )))
                }
                (_, None) => {
                    return Err(Error::invalid(format!(
                        "channel `{}` needs an embedding provider for queries",
                        channel.name
                    )))
                }
            };
            let qvec = embed_query(&query.id, &query.text, provider.as_ref())?;
            top_k_dense(&qvec, matrix, channel.k, metric)
        }
    }
}

/// Per-query union of the channels' recalled documents.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub query_id: String,
    /// Member ordinals, ascending.
    pub members: Vec<usize>,
    /// Each channel's top-K, in channel order.
    pub per_channel: Vec<(String, RankedList)>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, ordinal: usize) -> bool {
        self.members.binary_search(&ordinal).is_ok()
    }

    /// Names of the channels that recalled `ordinal`.
    pub fn provenance(&self, ordinal: usize) -> Vec<&str> {
        self.per_channel
            .iter()
            .filter(|(_, l)| l.rank_of(ordinal).is_some())
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// Exact set union of the per-channel lists.
pub fn combine_candidates(query_id: &str, per_channel: Vec<(String, RankedList)>) -> CandidateSet {
    let members: BTreeSet<usize> = per_channel.iter().flat_map(|(_, l)| l.ordinals()).collect();
    CandidateSet {
        query_id: query_id.to_string(),
        members: members.into_iter().collect(),
        per_channel,
    }
}

/// Scores every candidate once and orders them; ties go to the lower ordinal.
pub fn rerank(index: &SearchIndex, query: &SearchQuery, candidates: &CandidateSet, scorer: &ScorerHandle) -> Result<RankedList> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidate set is empty"));
    }
    let codes: Vec<PairCode<'_>> = candidates
        .members
        .iter()
        .map(|&o| {
            let doc = &index.corpus.documents()[o];
            PairCode {
                id: &doc.id,
                text: &doc.code,
            }
        })
        .collect();
    let pq = PairQuery {
        id: &query.id,
        text: &query.text,
    };
    let scores = scorer.score_pairs(&pq, &codes)?;
    let hits = candidates
        .members
        .iter()
        .zip(scores)
        .map(|(&ordinal, score)| Hit { ordinal, score })
        .collect::<Vec<_>>();
    let n = hits.len();
    Ok(RankedList::from_unsorted(hits, n))
}

/// Result of one two-stage query.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub candidates: CandidateSet,
    pub ranking: RankedList,
}

/// Recall with every channel, union, rerank.
pub fn toss_search(
    index: &SearchIndex,
    query: &SearchQuery,
    channels: &[ChannelSpec],
    scorer: &ScorerHandle,
) -> Result<SearchOutcome> {
    validate_channels(channels)?;
    let per_channel = channels
        .iter()
        .map(|c| Ok((c.name.clone(), recall_channel(index, query, c)?)))
        .collect::<Result<Vec<_>>>()?;
    let candidates = combine_candidates(&query.id, per_channel);
    let ranking = rerank(index, query, &candidates, scorer)?;
    Ok(SearchOutcome { candidates, ranking })
}

/// Min-max rescaling to `[0, 1]`; a constant list maps to all zeros.
pub fn normalize_zero_one(scores: &[f64]) -> Vec<f64> {
    let (min, max) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if max.is_nan() || max <= min {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - min) / (max - min)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    CombAnz,
    Max,
    Min,
    CombMnz,
    CombSum,
    Borda,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 6] = [
        Self::CombAnz,
        Self::Max,
        Self::Min,
        Self::CombMnz,
        Self::CombSum,
        Self::Borda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CombAnz => "combanz",
            Self::Max => "max",
            Self::Min => "min",
            Self::CombMnz => "combmnz",
            Self::CombSum => "combsum",
            Self::Borda => "borda",
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Unknown {
                what: "fusion method",
                name: s.to_string(),
                expected: "combanz, max, min, combmnz, combsum, borda".into(),
            })
    }
}

/// Fuses per-model rankings over their common pool (the union of all lists).
///
/// Score methods first min-max normalize each model's list; a document a
/// model did not return scores 0 for that model. Borda gives `N - rank`
/// points per model, where `N` is the pool size and a model's rank order
/// is its own list followed by the documents it did not return (ascending
/// ordinal). Models are visited in name order, so the output does not
/// depend on the order of `models`.
pub fn fuse_scores(models: &[(String, RankedList)], method: FusionMethod) -> Result<RankedList> {
    if models.len() < 2 {
        return Err(Error::invalid("fusion needs at least two models"));
    }
    let mut sorted: Vec<&(String, RankedList)> = models.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("duplicate model names in fusion input"));
    }
    let pool: Vec<usize> = sorted
        .iter()
        .flat_map(|(_, l)| l.ordinals())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let slot: BTreeMap<usize, usize> = pool.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let n = pool.len();

    // per_model[m][slot] = that model's value for the pool document
    let per_model: Vec<Vec<f64>> = sorted
        .iter()
        .map(|(_, list)| {
            let mut values = vec![0.0; n];
            if method == FusionMethod::Borda {
                let mut order: Vec<usize> = list.ordinals().collect();
                let listed: HashSet<usize> = order.iter().copied().collect();
                order.extend(pool.iter().copied().filter(|o| !listed.contains(o)));
                for (rank0, o) in order.into_iter().enumerate() {
                    values[slot[&o]] = (n - (rank0 + 1)) as f64;
                }
            } else {
                let raw: Vec<f64> = list.hits().iter().map(|h| h.score).collect();
                for (h, s) in list.hits().iter().zip(normalize_zero_one(&raw)) {
                    values[slot[&h.ordinal]] = s;
                }
            }
            values
        })
        .collect();

    let hits = pool
        .iter()
        .enumerate()
        .map(|(i, &ordinal)| {
            let column = per_model.iter().map(|v| v[i]);
            let score = fuse_column(method, column);
            Hit { ordinal, score }
        })
        .collect::<Vec<_>>();
    Ok(RankedList::from_unsorted(hits, n))
}

fn fuse_column(method: FusionMethod, column: impl Iterator<Item = f64> + Clone) -> f64 {
    let sum: f64 = column.clone().sum();
    let nonzero = column.clone().filter(|&s| s != 0.0).count();
    match method {
        FusionMethod::CombSum | FusionMethod::Borda => sum,
        FusionMethod::CombMnz => sum * nonzero as f64,
        FusionMethod::CombAnz => {
            if nonzero == 0 {
                0.0
            } else {
                sum / nonzero as f64
            }
        }
        FusionMethod::Max => column.fold(f64::NEG_INFINITY, f64::max),
        FusionMethod::Min => column.fold(f64::INFINITY, f64::min),
    }
}

/// Name under which reranker scores join a fusion pool.
pub const RERANK_MODEL: &str = "rerank";

/// The channels' lists plus the reranker's scores over the union.
pub fn fusion_pool(outcome: &SearchOutcome) -> Vec<(String, RankedList)> {
    let mut models = outcome.candidates.per_channel.clone();
    models.push((RERANK_MODEL.to_string(), outcome.ranking.clone()));
    models
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(pairs: &[(usize, f64)]) -> RankedList {
        let hits: Vec<Hit> = pairs.iter().map(|&(ordinal, score)| Hit { ordinal, score }).collect();
        RankedList::from_unsorted(hits, pairs.len())
    }

    #[test]
    fn channel_syntax() {
        let c: ChannelSpec = "lex:bm25:10".parse().unwrap();
        assert_eq!((c.name.as_str(), c.kind, c.k), ("lex", ChannelKind::Lexical(LexicalMethod::Bm25), 10));
        let all: ChannelSpec = "bm25:K=all".parse().unwrap();
        assert_eq!((all.name.as_str(), all.k), ("bm25", usize::MAX));
        assert_eq!("d:dense-dot:5".parse::<ChannelSpec>().unwrap().kind, ChannelKind::Dense(DenseMetric::Dot));
        assert!("x:bm25:0".parse::<ChannelSpec>().is_err());
        let err = "x:splade:5".parse::<ChannelSpec>().unwrap_err().to_string();
        assert!(err.contains("bm25") && err.contains("dense"), "{err}");
        assert!("bm25".parse::<ChannelSpec>().is_err());
    }

    #[test]
    fn union_is_exact() {
        let a = list(&[(0, 2.0), (1, 1.0)]);
        let b = list(&[(1, 5.0), (2, 4.0)]);
        let c = combine_candidates("q", vec![("a".into(), a.clone()), ("b".into(), b)]);
        assert_eq!(c.members, vec![0, 1, 2]);
        assert_eq!(c.provenance(1), vec!["a", "b"]);
        let single = combine_candidates("q", vec![("a".into(), a)]);
        assert_eq!(single.members, vec![0, 1]);
    }

    #[test]
    fn zero_one_normalization() {
        assert_eq!(normalize_zero_one(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_zero_one(&[5.0, 5.0]), vec![0.0, 0.0]);
        assert_eq!(normalize_zero_one(&[-1.0, 0.0, 3.0]), vec![0.0, 0.25, 1.0]);
    }

    #[test]
    fn fusion_method_names() {
        for m in FusionMethod::ALL {
            assert_eq!(m.name().parse::<FusionMethod>().unwrap(), m);
        }
        assert!("rrf".parse::<FusionMethod>().is_err());
    }

    #[test]
    fn fusion_requires_two_distinct_models() {
        let l = list(&[(0, 1.0)]);
        assert!(fuse_scores(&[("a".into(), l.clone())], FusionMethod::CombSum).is_err());
        assert!(fuse_scores(&[("a".into(), l.clone()), ("a".into(), l)], FusionMethod::CombSum).is_err());
    }

    #[test]
    fn borda_points() {
        // pool of 4; doc 0 is ranked 1st by model a and 3rd by model b
        let a = list(&[(0, 4.0), (1, 3.0), (2, 2.0), (3, 1.0)]);
        let b = list(&[(2, 4.0), (3, 3.0), (0, 2.0), (1, 1.0)]);
        let fused = fuse_scores(&[("a".into(), a), ("b".into(), b)], FusionMethod::Borda).unwrap();
        assert_eq!(fused.score_of(0), Some(4.0));
    }
}

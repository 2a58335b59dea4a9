//! Evaluation: MRR, R@K, latency and recall-overlap statistics.
//!
//! A query whose ground truth is missing from its ranking contributes a
//! reciprocal rank of 0 and counts as a miss at every K.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, QueryRecord};
use crate::error::{Error, Result};
use crate::ranking::{Hit, RankedList};

/// Cutoffs reported for R@K.
pub const RECALL_CUTOFFS: [usize; 5] = [1, 5, 10, 100, 1000];

/// 1-based rank of the ground truth per query, `None` for a miss.
pub fn gt_ranks(rankings: &[RankedList], gts: &[usize]) -> Result<Vec<Option<usize>>> {
    if rankings.len() != gts.len() {
        return Err(Error::invalid(format!(
            "{} rankings but {} ground truths",
            rankings.len(),
            gts.len()
        )));
    }
    Ok(rankings.iter().zip(gts).map(|(r, &gt)| r.rank_of(gt)).collect())
}

fn mrr_of(ranks: &[Option<usize>]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum::<f64>() / ranks.len() as f64
}

fn recall_of(ranks: &[Option<usize>], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / ranks.len() as f64
}

/// Mean reciprocal rank of the ground truths.
pub fn mrr(rankings: &[RankedList], gts: &[usize]) -> Result<f64> {
    Ok(mrr_of(&gt_ranks(rankings, gts)?))
}

/// Fraction of queries whose ground truth is in the top `k`.
pub fn recall_at_k(rankings: &[RankedList], gts: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    Ok(recall_of(&gt_ranks(rankings, gts)?, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_id: String,
    /// 1-based rank of the ground truth; `None` when it was not returned.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_queries: usize,
    pub mrr: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub per_query: Vec<QueryOutcome>,
}

impl EvalReport {
    pub fn from_ranks(ids: Vec<String>, ranks: Vec<Option<usize>>) -> Self {
        let recall_at = RECALL_CUTOFFS.iter().map(|&k| (k, recall_of(&ranks, k))).collect();
        Self {
            n_queries: ranks.len(),
            mrr: mrr_of(&ranks),
            recall_at,
            per_query: ids
                .into_iter()
                .zip(ranks)
                .map(|(query_id, rank)| QueryOutcome { query_id, rank })
                .collect(),
        }
    }
}

/// Runs `pipeline` on every query (on `jobs` threads) and scores the result.
pub fn evaluate_run<F>(pipeline: F, queries: &[QueryRecord], jobs: usize) -> Result<EvalReport>
where
    F: Fn(&QueryRecord) -> Result<RankedList> + Sync,
{
    if queries.is_empty() {
        return Err(Error::invalid("no queries to evaluate"));
    }
    let run_one = |q: &QueryRecord| {
        pipeline(q)
            .map(|r| r.rank_of(q.gt_ordinal))
            .map_err(|e| Error::Query {
                query_id: q.id.clone(),
                source: Box::new(e),
            })
    };
    let ranks: Vec<Option<usize>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| queries.par_iter().map(run_one).collect::<Result<_>>())?
    } else {
        queries.iter().map(run_one).collect::<Result<_>>()?
    };
    let ids = queries.iter().map(|q| q.id.clone()).collect();
    Ok(EvalReport::from_ranks(ids, ranks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyConfig {
    pub sample_size: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            sample_size: 100,
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    /// Mean over repeats of the average per-query seconds.
    pub per_query_mean: f64,
    /// Population standard deviation of the same, across repeats.
    pub per_query_std: f64,
    pub repeats: usize,
    pub sample_size: usize,
    pub seed: u64,
    /// Ids of the sampled queries, in run order.
    pub sampled: Vec<String>,
}

/// Indices of the latency sample; a fixed seed always picks the same queries.
pub fn latency_sample(n_queries: usize, sample_size: usize, seed: u64) -> Result<Vec<usize>> {
    if sample_size == 0 || sample_size > n_queries {
        return Err(Error::invalid(format!(
            "latency sample of {sample_size} needs between 1 and {n_queries} queries"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, n_queries, sample_size).into_vec())
}

/// Times `pipeline` over a seeded sample of queries, single-threaded.
///
/// One untimed warm-up pass runs first. Each repeat then times every
/// sampled query individually; the report gives the mean and standard
/// deviation of the per-repeat average.
pub fn measure_latency<F>(mut pipeline: F, queries: &[QueryRecord], cfg: LatencyConfig) -> Result<TimingReport>
where
    F: FnMut(&QueryRecord) -> Result<RankedList>,
{
    if cfg.repeats == 0 {
        return Err(Error::invalid("latency repeats must be at least 1"));
    }
    let picked = latency_sample(queries.len(), cfg.sample_size, cfg.seed)?;
    let run = |pipeline: &mut F, q: &QueryRecord| {
        pipeline(q).map_err(|e| Error::Query {
            query_id: q.id.clone(),
            source: Box::new(e),
        })
    };
    for &i in &picked {
        run(&mut pipeline, &queries[i])?;
    }
    let mut per_repeat = Vec::with_capacity(cfg.repeats);
    for _ in 0..cfg.repeats {
        let mut total = Duration::ZERO;
        for &i in &picked {
            let start = Instant::now();
            let out = run(&mut pipeline, &queries[i]);
            total += start.elapsed();
            out?;
        }
        per_repeat.push(total.as_secs_f64() / picked.len() as f64);
    }
    let mean = per_repeat.iter().sum::<f64>() / per_repeat.len() as f64;
    let var = per_repeat.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / per_repeat.len() as f64;
    Ok(TimingReport {
        per_query_mean: mean,
        per_query_std: var.sqrt(),
        repeats: cfg.repeats,
        sample_size: picked.len(),
        seed: cfg.seed,
        sampled: picked.iter().map(|&i| queries[i].id.clone()).collect(),
    })
}

/// One row of the overlap table: a non-empty subset of channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub channels: Vec<String>,
    /// Queries where every channel in the subset shares at least one top-T document.
    pub common_recall: usize,
    /// Queries whose ground truth is in the top T of exactly these channels.
    pub gt_exclusive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTable {
    pub top: usize,
    pub n_queries: usize,
    pub rows: Vec<OverlapRow>,
    /// Per channel: queries whose ground truth only that channel recalled.
    pub unique_gt: BTreeMap<String, usize>,
}

impl OverlapTable {
    pub fn row(&self, channels: &[&str]) -> Option<&OverlapRow> {
        let mut key: Vec<&str> = channels.to_vec();
        key.sort_unstable();
        self.rows.iter().find(|r| r.channels.iter().map(String::as_str).eq(key.iter().copied()))
    }
}

const MAX_OVERLAP_CHANNELS: usize = 16;

/// Recall-overlap counts over every channel subset.
///
/// `lists[channel][query]` holds that channel's ranked ids for the query;
/// only the first `top` of each are considered.
pub fn overlap_stats(lists: &BTreeMap<String, Vec<Vec<usize>>>, gts: &[usize], top: usize) -> Result<OverlapTable> {
    if top == 0 {
        return Err(Error::invalid("top must be at least 1"));
    }
    if lists.is_empty() || lists.len() > MAX_OVERLAP_CHANNELS {
        return Err(Error::invalid(format!(
            "overlap needs between 1 and {MAX_OVERLAP_CHANNELS} channels"
        )));
    }
    let names: Vec<&String> = lists.keys().collect();
    let n_queries = gts.len();
    for (name, per_query) in lists {
        if per_query.len() != n_queries {
            return Err(Error::invalid(format!(
                "channel `{name}` covers {} queries, expected {n_queries}",
                per_query.len()
            )));
        }
    }
    let m = names.len();
    let mut common = vec![0usize; 1 << m];
    let mut exclusive = vec![0usize; 1 << m];
    for (qi, &gt) in gts.iter().enumerate() {
        let sets: Vec<HashSet<usize>> = names
            .iter()
            .map(|n| lists[*n][qi].iter().take(top).copied().collect())
            .collect();
        let mut gt_mask = 0usize;
        for (ci, s) in sets.iter().enumerate() {
            if s.contains(&gt) {
                gt_mask |= 1 << ci;
            }
        }
        exclusive[gt_mask] += 1;
        for (mask, count) in common.iter_mut().enumerate().skip(1) {
            let members: Vec<&HashSet<usize>> = (0..m).filter(|c| mask & (1 << c) != 0).map(|c| &sets[c]).collect();
            if members[0].iter().any(|d| members[1..].iter().all(|s| s.contains(d))) {
                *count += 1;
            }
        }
    }
    let rows = (1usize..(1 << m))
        .map(|mask| OverlapRow {
            channels: (0..m).filter(|c| mask & (1 << c) != 0).map(|c| names[c].clone()).collect(),
            common_recall: common[mask],
            gt_exclusive: exclusive[mask],
        })
        .collect();
    let unique_gt = names
        .iter()
        .enumerate()
        .map(|(c, n)| ((*n).clone(), exclusive[1 << c]))
        .collect();
    Ok(OverlapTable {
        top,
        n_queries,
        rows,
        unique_gt,
    })
}

/// Writes TREC run lines: `query-id Q0 doc-id rank score channel-name`.
pub fn write_trec_run<W: Write>(mut out: W, corpus: &Corpus, query_id: &str, channel: &str, ranking: &RankedList) -> std::io::Result<()> {
    for (i, h) in ranking.hits().iter().enumerate() {
        writeln!(out, "{} Q0 {} {} {} {}", query_id, corpus.id_of(h.ordinal), i + 1, h.score, channel)?;
    }
    Ok(())
}

/// Reads TREC run lines into `channel -> query -> ranking`.
///
/// Document ids are resolved against `corpus`; ranks are re-derived from
/// scores with the usual ordinal tie rule.
pub fn read_trec_run<R: BufRead>(input: R, corpus: &Corpus) -> Result<BTreeMap<String, BTreeMap<String, RankedList>>> {
    let mut raw: BTreeMap<String, BTreeMap<String, Vec<Hit>>> = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<run>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: "<run>".into(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [qid, _q0, doc, _rank, score, channel] = fields[..] else {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        };
        let ordinal = corpus
            .ordinal_of(doc)
            .ok_or_else(|| err(format!("unknown document `{doc}`")))?;
        let score: f64 = score.parse().map_err(|_| err(format!("bad score `{score}`")))?;
        let hits = raw
            .entry(channel.to_string())
            .or_default()
            .entry(qid.to_string())
            .or_default();
        if hits.iter().any(|h| h.ordinal == ordinal) {
            return Err(err(format!("document `{doc}` repeated for query `{qid}`")));
        }
        hits.push(Hit { ordinal, score });
    }
    Ok(raw
        .into_iter()
        .map(|(c, qs)| {
            let qs = qs
                .into_iter()
                .map(|(q, hits)| {
                    let n = hits.len();
                    (q, RankedList::from_unsorted(hits, n))
                })
                .collect();
            (c, qs)
        })
        .collect())
}

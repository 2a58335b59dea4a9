//! Test-only oracles and fixtures.
//!
//! The scorers here recompute every formula directly from token lists with
//! no index, no shared helpers, and no precomputed statistics.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toss::corpus::{load_corpus, load_queries, preprocess_queries, Corpus, QueryRecord};
use toss::textprep::{PrepConfig, TokenStream};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture20() -> (Corpus, Vec<QueryRecord>) {
    let corpus = load_corpus(fixture_dir().join("fixture20.jsonl"), "python").unwrap();
    let queries = load_queries(fixture_dir().join("fixture20_queries.jsonl"), &corpus).unwrap();
    (corpus, queries)
}

pub fn desk(prep: PrepConfig) -> (Corpus, Vec<QueryRecord>) {
    let corpus = load_corpus(data_dir().join("desk/corpus.jsonl"), "python").unwrap();
    let mut queries = load_queries(data_dir().join("desk/queries.jsonl"), &corpus).unwrap();
    preprocess_queries(&mut queries, prep);
    (corpus, queries)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const WORDS: [&str; 14] = [
    "parse", "file", "json", "read", "write", "path", "config", "list", "sort", "key", "value", "http",
    "server", "data",
];

/// Random token streams: up to `max_docs` documents of up to `max_len` tokens
/// drawn from a small vocabulary, so terms recur across documents.
pub fn random_docs(rng: &mut ChaCha8Rng, max_docs: usize, max_len: usize) -> Vec<TokenStream> {
    let n = rng.random_range(1..=max_docs);
    (0..n)
        .map(|_| {
            let len = rng.random_range(0..=max_len);
            (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect()
        })
        .collect()
}

/// Random query, sometimes containing a token no document has.
pub fn random_query(rng: &mut ChaCha8Rng) -> TokenStream {
    let len = rng.random_range(0..=6);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.1) {
                "unseen"
            } else {
                WORDS[rng.random_range(0..WORDS.len())]
            }
        })
        .collect()
}

fn counts(tokens: &TokenStream) -> HashMap<&str, f64> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    m
}

pub fn jaccard(q: &TokenStream, d: &TokenStream) -> f64 {
    let qs: HashSet<&str> = q.iter().map(String::as_str).collect();
    let ds: HashSet<&str> = d.iter().map(String::as_str).collect();
    let union = qs.union(&ds).count();
    if union == 0 {
        0.0
    } else {
        qs.intersection(&ds).count() as f64 / union as f64
    }
}

pub fn bow(q: &TokenStream, d: &TokenStream) -> f64 {
    let (qc, dc) = (counts(q), counts(d));
    let dot: f64 = qc.iter().map(|(t, c)| c * dc.get(t).unwrap_or(&0.0)).sum();
    let qn = qc.values().map(|c| c * c).sum::<f64>().sqrt();
    let dn = dc.values().map(|c| c * c).sum::<f64>().sqrt();
    if qn == 0.0 || dn == 0.0 {
        0.0
    } else {
        dot / (qn * dn)
    }
}

fn df(docs: &[TokenStream], term: &str) -> usize {
    docs.iter().filter(|d| d.iter().any(|t| t == term)).count()
}

pub fn tfidf(docs: &[TokenStream], q: &TokenStream, ordinal: usize) -> f64 {
    let n = docs.len() as f64;
    let idf = |t: &str| ((1.0 + n) / (1.0 + df(docs, t) as f64)).ln() + 1.0;
    let weights = |tokens: &TokenStream| -> HashMap<String, f64> {
        counts(tokens)
            .into_iter()
            .filter(|(t, _)| df(docs, t) > 0)
            .map(|(t, c)| (t.to_string(), c * idf(t)))
            .collect()
    };
    let (qw, dw) = (weights(q), weights(&docs[ordinal]));
    let dot: f64 = qw.iter().map(|(t, w)| w * dw.get(t).unwrap_or(&0.0)).sum();
    let qn = qw.values().map(|w| w * w).sum::<f64>().sqrt();
    let dn = dw.values().map(|w| w * w).sum::<f64>().sqrt();
    if qn == 0.0 || dn == 0.0 {
        0.0
    } else {
        dot / (qn * dn)
    }
}

pub fn bm25(docs: &[TokenStream], q: &TokenStream, ordinal: usize) -> f64 {
    let (k1, b, eps) = (1.5, 0.75, 0.25);
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let raw_idf = |t: &str| {
        let f = df(docs, t) as f64;
        ((n - f + 0.5) / (f + 0.5)).ln()
    };
    let vocab: HashSet<&str> = docs.iter().flat_map(|d| d.iter().map(String::as_str)).collect();
    let positive: Vec<f64> = vocab.iter().map(|t| raw_idf(t)).filter(|&v| v > 0.0).collect();
    let mean_pos = if positive.is_empty() {
        0.0
    } else {
        positive.iter().sum::<f64>() / positive.len() as f64
    };
    let doc = &docs[ordinal];
    let dl = doc.len() as f64;
    let mut score = 0.0;
    for t in q {
        let tf = doc.iter().filter(|x| *x == t).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let raw = raw_idf(t);
        let idf = if raw < 0.0 { eps * mean_pos } else { raw };
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    score
}

/// Full ranking by an oracle score: descending, ties by ascending ordinal.
pub fn oracle_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order
}

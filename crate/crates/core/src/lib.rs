//! Two-stage hybrid code search.
//!
//! Fast first-stage channels (Jaccard, bag-of-words, TF-IDF, BM25 and dense
//! embeddings) each recall their top-K documents for a query. The union of
//! those candidates is scored by a pair scorer, typically a cross-encoder
//! behind the [`adapter`] protocol, and returned in score order.
//!
//! ```no_run
//! use std::sync::Arc;
//! use toss::{corpus, crossrank, engine::SearchIndex, fusion, textprep::PrepConfig};
//!
//! let corpus = corpus::load_corpus("corpus.jsonl", "python")?;
//! let index = SearchIndex::build(corpus, PrepConfig::ALL)?;
//! let scorer = crossrank::ScorerHandle::new(Arc::new(crossrank::StubScorer::new(index.lexical.clone())));
//! let channels = ["bm25:bm25:10".parse()?, "tfidf:tfidf:10".parse()?];
//! let query = index.query("q1", "read a json config file");
//! let outcome = fusion::toss_search(&index, &query, &channels, &scorer)?;
//! for hit in outcome.ranking.hits() {
//!     println!("{} {:.3}", index.corpus.id_of(hit.ordinal), hit.score);
//! }
//! # Ok::<(), toss::Error>(())
//! ```

pub mod adapter;
pub mod corpus;
pub mod crossrank;
pub mod dense;
pub mod engine;
pub mod error;
pub mod fusion;
pub mod lexical;
pub mod metrics;
pub mod persist;
pub mod ranking;
pub mod textprep;

pub use error::{Error, Result};
pub use ranking::{Hit, RankedList};

//! Built-in protocol server backed by the stub models, so the adapter path
//! can be exercised end to end without any external model.

use std::sync::Arc;

use toss::adapter::{serve, AdapterBackend, AdapterInfo, AdapterType};
use toss::crossrank::{PairCode, PairQuery, PairScorer, StubScorer};
use toss::dense::StubEmbedder;
use toss::lexical::InvertedIndex;
use toss::{Error, Result};

use crate::args::{StubArgs, StubMode};

struct Embedder(StubEmbedder, usize);

impl AdapterBackend for Embedder {
    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            name: format!("stub:{}", self.1),
            kind: AdapterType::Embedder,
            dim: Some(self.1),
        }
    }

    fn embed(&mut self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, String> {
        Ok(texts.iter().map(|t| self.0.embed_text(t)).collect())
    }
}

struct Scorer(StubScorer);

impl AdapterBackend for Scorer {
    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            name: "stub".into(),
            kind: AdapterType::PairScorer,
            dim: None,
        }
    }

    fn score(&mut self, pairs: &[(String, String)]) -> std::result::Result<Vec<f64>, String> {
        pairs
            .iter()
            .map(|(q, c)| {
                let query = PairQuery { id: "", text: q };
                let code = PairCode { id: "", text: c };
                self.0.score_batch(&query, &[code]).map(|s| s[0])
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.to_string())
    }
}

pub fn run(args: &StubArgs) -> Result<()> {
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    let served = match args.mode {
        StubMode::Embedder => {
            if args.dim == 0 {
                return Err(Error::InvalidArgument("--dim must be at least 1".into()));
            }
            serve(&mut Embedder(StubEmbedder::new(args.dim, args.prep), args.dim), stdin, stdout)
        }
        StubMode::PairScorer => {
            let dir = args.index.as_ref().expect("clap requires --index for pair_scorer");
            let lexical = InvertedIndex::load(dir.join(toss::engine::LEXICAL_FILE))?;
            serve(&mut Scorer(StubScorer::new(Arc::new(lexical))), stdin, stdout)
        }
    };
    served.map_err(|source| Error::Io {
        path: "<stdio>".into(),
        source,
    })
}

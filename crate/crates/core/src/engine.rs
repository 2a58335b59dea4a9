//! Built search artifacts: corpus, lexical index and optional embeddings.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::corpus::Corpus;
use crate::dense::{embed_corpus, EmbeddingMatrix, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::lexical::{Bm25Params, InvertedIndex};
use crate::persist::{self, check_prep};
use crate::textprep::{PrepConfig, TokenStream};

pub const CORPUS_FILE: &str = "corpus.toss";
pub const LEXICAL_FILE: &str = "lexical.toss";
pub const DENSE_FILE: &str = "dense.toss";

/// Everything a query needs. Immutable once built and shareable across threads.
pub struct SearchIndex {
    pub corpus: Arc<Corpus>,
    pub lexical: Arc<InvertedIndex>,
    pub embeddings: Option<Arc<EmbeddingMatrix>>,
    pub provider: Option<Arc<dyn EmbeddingProvider>>,
    pub bm25: Bm25Params,
}

/// A query ready for every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchQuery {
    pub id: String,
    pub text: String,
    pub tokens: TokenStream,
}

impl SearchIndex {
    pub fn build(corpus: Corpus, prep: PrepConfig) -> Result<Self> {
        let lexical = InvertedIndex::build(&corpus, prep)?;
        Ok(Self {
            corpus: Arc::new(corpus),
            lexical: Arc::new(lexical),
            embeddings: None,
            provider: None,
            bm25: Bm25Params::default(),
        })
    }

    /// Embeds the corpus with `provider` and keeps the provider for queries.
    pub fn with_embeddings(mut self, provider: Arc<dyn EmbeddingProvider>) -> Result<Self> {
        let matrix = embed_corpus(&self.corpus, provider.as_ref())?;
        self.embeddings = Some(Arc::new(matrix));
        self.provider = Some(provider);
        Ok(self)
    }

    /// Attaches a precomputed matrix, checking it against the corpus.
    pub fn with_matrix(mut self, matrix: EmbeddingMatrix, provider: Option<Arc<dyn EmbeddingProvider>>) -> Result<Self> {
        matrix.check_against(&self.corpus)?;
        if let Some(p) = &provider {
            if p.dim() != matrix.dim() {
                return Err(Error::Dimension {
                    expected: matrix.dim(),
                    found: p.dim(),
                });
            }
        }
        self.embeddings = Some(Arc::new(matrix));
        self.provider = provider;
        Ok(self)
    }

    pub fn prep(&self) -> PrepConfig {
        self.lexical.prep()
    }

    pub fn query(&self, id: impl Into<String>, text: impl Into<String>) -> SearchQuery {
        let text = text.into();
        SearchQuery {
            id: id.into(),
            tokens: self.lexical.prepare_query(&text),
            text,
        }
    }

    /// Writes corpus, index and (if present) embeddings under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let prep = self.prep();
        persist::save_artifact(dir.join(CORPUS_FILE), prep, self.corpus.as_ref())?;
        self.lexical.save(dir.join(LEXICAL_FILE))?;
        let dense = dir.join(DENSE_FILE);
        match &self.embeddings {
            Some(m) => m.save(&dense, prep)?,
            None if dense.exists() => fs::remove_file(&dense).map_err(|e| Error::io(&dense, e))?,
            None => {}
        }
        Ok(())
    }

    /// Loads artifacts from `dir`. The embedding provider is not restored;
    /// attach one with [`SearchIndex::set_provider`] before dense search.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let (corpus_prep, mut corpus): (PrepConfig, Corpus) = persist::load_artifact(dir.join(CORPUS_FILE))?;
        corpus.rebuild_lookup()?;
        let lexical = InvertedIndex::load(dir.join(LEXICAL_FILE))?;
        check_prep(corpus_prep, lexical.prep())?;
        if lexical.doc_count() != corpus.len() {
            return Err(Error::Corrupt("index and corpus sizes differ".into()));
        }
        let mut index = Self {
            corpus: Arc::new(corpus),
            lexical: Arc::new(lexical),
            embeddings: None,
            provider: None,
            bm25: Bm25Params::default(),
        };
        let dense = dir.join(DENSE_FILE);
        if dense.exists() {
            let (prep, matrix) = EmbeddingMatrix::load(&dense)?;
            check_prep(prep, index.prep())?;
            index = index.with_matrix(matrix, None)?;
        }
        Ok(index)
    }

    pub fn set_provider(&mut self, provider: Arc<dyn EmbeddingProvider>) -> Result<()> {
        if let Some(m) = &self.embeddings {
            if m.dim() != provider.dim() {
                return Err(Error::Dimension {
                    expected: m.dim(),
                    found: provider.dim(),
                });
            }
        }
        self.provider = Some(provider);
        Ok(())
    }
}

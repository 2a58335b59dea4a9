//! Bi-encoder channel: documents and queries embedded by a provider,
//! compared by exhaustive cosine or dot-product search.
//!
//! Corpus vectors are computed once and persisted; only the query is
//! embedded at search time.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterProcess, AdapterType, BATCH_LIMIT};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::persist;
use crate::ranking::RankedList;
use crate::textprep::{preprocess, PrepConfig};

/// Something to embed: `id` matters only to lookup-based providers.
#[derive(Debug, Clone, Copy)]
pub struct EmbedItem<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

pub trait EmbeddingProvider: Send + Sync {
    /// Descriptor stored with the matrix, e.g. `stub:256`.
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f64>>>;
}

/// How to obtain a provider: `stub:<dim>`, `file:<path>` or `adapter:<command>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Stub { dim: usize },
    File { path: PathBuf },
    Adapter { command: String },
}

impl FromStr for ProviderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "stub" => {
                let dim = if rest.is_empty() {
                    StubEmbedder::DEFAULT_DIM
                } else {
                    rest.parse()
                        .map_err(|_| Error::invalid(format!("bad stub dimension `{rest}`")))?
                };
                if dim == 0 {
                    return Err(Error::invalid("stub dimension must be at least 1"));
                }
                Ok(Self::Stub { dim })
            }
            "file" if !rest.is_empty() => Ok(Self::File { path: rest.into() }),
            "adapter" if !rest.is_empty() => Ok(Self::Adapter {
                command: rest.to_string(),
            }),
            _ => Err(Error::Unknown {
                what: "embedding provider",
                name: s.to_string(),
                expected: "stub[:<dim>], file:<path>, adapter:<command>".into(),
            }),
        }
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Stub { dim } => write!(f, "stub:{dim}"),
            Self::File { path } => write!(f, "file:{}", path.display()),
            Self::Adapter { command } => write!(f, "adapter:{command}"),
        }
    }
}

impl ProviderSpec {
    /// Instantiates the provider. `prep` is used by the stub only.
    pub fn open(&self, prep: PrepConfig) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            Self::Stub { dim } => Box::new(StubEmbedder::new(*dim, prep)),
            Self::File { path } => Box::new(FileEmbeddings::load(path)?),
            Self::Adapter { command } => Box::new(AdapterEmbedder::spawn(command)?),
        })
    }
}

// FNV-1a, 64-bit: stable across platforms and releases.
fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Deterministic hashing embedder used as a test double and desk baseline.
///
/// Each preprocessed token increments bucket `hash(token) % dim`; the
/// histogram is L2-normalized. Empty text embeds to the zero vector.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    dim: usize,
    prep: PrepConfig,
}

impl StubEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize, prep: PrepConfig) -> Self {
        assert!(dim >= 1, "stub dimension must be at least 1");
        Self { dim, prep }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (stable_hash(token) % self.dim as u64) as usize
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in &preprocess(text, self.prep) {
            v[self.bucket(tok)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for StubEmbedder {
    fn name(&self) -> String {
        format!("stub:{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f64>>> {
        Ok(items.iter().map(|it| self.embed_text(it.text)).collect())
    }
}

/// Precomputed vectors read from a sidecar file, looked up by id.
///
/// ```text
/// dim 3
/// doc-1<TAB>0.1 0.2 0.3
/// ```
#[derive(Debug, Clone)]
pub struct FileEmbeddings {
    path: PathBuf,
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl FileEmbeddings {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8_lossy(&bytes);
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let dim = match lines.next() {
            Some((_, header)) => header
                .strip_prefix("dim ")
                .and_then(|d| d.trim().parse::<usize>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| err(1, format!("expected `dim <N>`, found `{header}`")))?,
            None => return Err(err(1, "empty embedding file".into())),
        };
        let mut vectors = HashMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| err(i + 1, "expected `<id>\\t<values>`".into()))?;
            let v: Vec<f64> = values
                .split_whitespace()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(i + 1, format!("bad float: {e}")))?;
            if v.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: v.len(),
                });
            }
            if vectors.insert(id.to_string(), v).is_some() {
                return Err(Error::DuplicateId(id.to_string()));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            dim,
            vectors,
        })
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn name(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f64>>> {
        items
            .iter()
            .map(|it| {
                self.vectors
                    .get(it.id)
                    .cloned()
                    .ok_or_else(|| Error::MissingEmbedding(it.id.to_string()))
            })
            .collect()
    }
}

/// Embedder running in an external adapter process.
pub struct AdapterEmbedder {
    name: String,
    dim: usize,
    process: Mutex<AdapterProcess>,
}

impl AdapterEmbedder {
    pub fn spawn(command: &str) -> Result<Self> {
        let process = AdapterProcess::spawn(command)?;
        let info = process.info().clone();
        if info.kind != AdapterType::Embedder {
            return Err(Error::Adapter(format!("`{command}` is not an embedder")));
        }
        let dim = info
            .dim
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Adapter(format!("`{command}` did not declare a dimension")))?;
        Ok(Self {
            name: format!("adapter:{command}"),
            dim,
            process: Mutex::new(process),
        })
    }
}

impl EmbeddingProvider for AdapterEmbedder {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f64>>> {
        let texts: Vec<&str> = items.iter().map(|it| it.text).collect();
        let mut process = self.process.lock().unwrap_or_else(|p| p.into_inner());
        process.embed(&texts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenseMetric {
    #[default]
    Cosine,
    Dot,
}

impl fmt::Display for DenseMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::Dot => "dot",
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixData {
    dim: usize,
    provider_name: String,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

/// One vector per corpus document, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    provider_name: String,
    ids: Vec<String>,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(provider_name: String, dim: usize, ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if ids.len() != vectors.len() {
            return Err(Error::invalid(format!("{} ids but {} vectors", ids.len(), vectors.len())));
        }
        let mut data = Vec::with_capacity(dim * vectors.len());
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: v.len(),
                });
            }
            data.extend_from_slice(v);
        }
        let norms = data.chunks(dim).map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        Ok(Self {
            dim,
            provider_name,
            ids,
            data,
            norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn provider_name(&self) -> &str {
        &self.provider_name
    }

    pub fn vector(&self, ordinal: usize) -> &[f64] {
        &self.data[ordinal * self.dim..(ordinal + 1) * self.dim]
    }

    /// Fails unless ids equal the corpus ids in corpus order.
    pub fn check_against(&self, corpus: &Corpus) -> Result<()> {
        let same = self.ids.len() == corpus.len()
            && self.ids.iter().zip(corpus.documents()).all(|(a, d)| *a == d.id);
        if same {
            Ok(())
        } else {
            Err(Error::invalid("embedding matrix ids do not match the corpus"))
        }
    }

    pub fn similarity(&self, query: &[f64], query_norm: f64, ordinal: usize, metric: DenseMetric) -> f64 {
        let dot: f64 = self.vector(ordinal).iter().zip(query).map(|(a, b)| a * b).sum();
        match metric {
            DenseMetric::Dot => dot,
            DenseMetric::Cosine => {
                let denom = query_norm * self.norms[ordinal];
                if denom == 0.0 {
                    0.0
                } else {
                    (dot / denom).clamp(-1.0, 1.0)
                }
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, prep: PrepConfig) -> Result<()> {
        let data = MatrixData {
            dim: self.dim,
            provider_name: self.provider_name.clone(),
            ids: self.ids.clone(),
            vectors: self.data.chunks(self.dim).map(<[f64]>::to_vec).collect(),
        };
        persist::save_artifact(path, prep, &data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(PrepConfig, Self)> {
        let (prep, data): (PrepConfig, MatrixData) = persist::load_artifact(path)?;
        Ok((prep, Self::new(data.provider_name, data.dim, data.ids, data.vectors)?))
    }
}

/// Embeds every document of `corpus`, in corpus order.
pub fn embed_corpus(corpus: &Corpus, provider: &dyn EmbeddingProvider) -> Result<EmbeddingMatrix> {
    let dim = provider.dim();
    let mut vectors = Vec::with_capacity(corpus.len());
    for chunk in corpus.documents().chunks(BATCH_LIMIT) {
        let items: Vec<EmbedItem<'_>> = chunk
            .iter()
            .map(|d| EmbedItem {
                id: &d.id,
                text: &d.code,
            })
            .collect();
        let out = provider.embed(&items)?;
        if out.len() != items.len() {
            return Err(Error::invalid(format!(
                "provider returned {} vectors for {} documents",
                out.len(),
                items.len()
            )));
        }
        vectors.extend(out);
    }
    let ids = corpus.documents().iter().map(|d| d.id.clone()).collect();
    EmbeddingMatrix::new(provider.name(), dim, ids, vectors)
}

/// Embeds one query; `id` is only consulted by lookup-based providers.
pub fn embed_query(id: &str, text: &str, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>> {
    let mut out = provider.embed(&[EmbedItem { id, text }])?;
    let v = out
        .pop()
        .filter(|_| out.is_empty())
        .ok_or_else(|| Error::invalid("provider returned no vector for the query"))?;
    if v.len() != provider.dim() {
        return Err(Error::Dimension {
            expected: provider.dim(),
            found: v.len(),
        });
    }
    Ok(v)
}

/// Exhaustive top-`k` search; ties go to the lower ordinal.
pub fn top_k_dense(query: &[f64], matrix: &EmbeddingMatrix, k: usize, metric: DenseMetric) -> Result<RankedList> {
    if query.len() != matrix.dim() {
        return Err(Error::Dimension {
            expected: matrix.dim(),
            found: query.len(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let qnorm = query.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scores: Vec<f64> = (0..matrix.len())
        .map(|o| matrix.similarity(query, qnorm, o, metric))
        .collect();
    Ok(RankedList::from_scores(&scores, k))
}

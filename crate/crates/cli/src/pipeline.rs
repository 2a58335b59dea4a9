//! Shared recall/rerank/fuse wiring for `search` and `eval`.

use std::collections::HashMap;
use std::sync::Arc;

use toss::crossrank::{AdapterScorer, OracleScorer, ScorerHandle, StubScorer};
use toss::dense::ProviderSpec;
use toss::engine::SearchIndex;
use toss::fusion::{
    combine_candidates, fuse_scores, recall_channel, rerank, validate_channels, ChannelKind, ChannelSpec, FusionMethod,
    RERANK_MODEL,
};
use toss::persist::check_prep;
use toss::ranking::RankedList;
use toss::{Error, Result};

use crate::args::{PipelineArgs, RecallArgs};

pub const ADAPTER_ENV: &str = "TOSS_ADAPTER";

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// `adapter` alone takes its command from the environment.
fn adapter_command(spec: &str) -> Result<Option<String>> {
    match spec.strip_prefix("adapter") {
        Some("") => std::env::var(ADAPTER_ENV)
            .ok()
            .filter(|c| !c.trim().is_empty())
            .map(Some)
            .ok_or_else(|| usage(format!("`adapter` given without a command and {ADAPTER_ENV} is not set"))),
        Some(rest) => match rest.strip_prefix(':') {
            Some(cmd) if !cmd.is_empty() => Ok(Some(cmd.to_string())),
            _ => Ok(None),
        },
        None => Ok(None),
    }
}

pub fn parse_provider(spec: &str) -> Result<ProviderSpec> {
    match adapter_command(spec)? {
        Some(command) => Ok(ProviderSpec::Adapter { command }),
        None => spec.parse(),
    }
}

/// Channel strings with the default depth filled in for bare kinds.
pub fn parse_channels(raw: &[String], default_k: usize) -> Result<Vec<ChannelSpec>> {
    let channels = raw
        .iter()
        .map(|s| {
            if s.contains(':') {
                s.parse()
            } else {
                ChannelSpec::new(s.as_str(), s.parse::<ChannelKind>()?, default_k)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    validate_channels(&channels)?;
    Ok(channels)
}

/// Loads the index and attaches a query-side embedding provider when a
/// dense channel needs one.
pub fn open_index(args: &RecallArgs, channels: &[ChannelSpec]) -> Result<SearchIndex> {
    let mut index = SearchIndex::load(&args.index)?;
    if let Some(requested) = args.prep {
        check_prep(index.prep(), requested)?;
    }
    let needs_dense = channels.iter().any(|c| matches!(c.kind, ChannelKind::Dense(_)));
    if !needs_dense {
        return Ok(index);
    }
    let spec = match &args.embed {
        Some(s) => Some(parse_provider(s)?),
        None => index
            .embeddings
            .as_ref()
            .and_then(|m| m.provider_name().parse::<ProviderSpec>().ok())
            .filter(|p| matches!(p, ProviderSpec::Stub { .. })),
    };
    if let Some(spec) = spec {
        let provider = spec.open(index.prep())?;
        index.set_provider(Arc::from(provider))?;
    }
    Ok(index)
}

pub fn scorer_handle(spec: &str, gt: HashMap<String, String>, index: &SearchIndex) -> Result<Option<ScorerHandle>> {
    if let Some(command) = adapter_command(spec)? {
        return Ok(Some(ScorerHandle::new(Arc::new(AdapterScorer::spawn(&command)?))));
    }
    match spec {
        "none" => Ok(None),
        "stub" => Ok(Some(ScorerHandle::new(Arc::new(StubScorer::with_params(index.lexical.clone(), index.bm25))))),
        "oracle" => Ok(Some(ScorerHandle::new(Arc::new(OracleScorer::new(gt))))),
        other => Err(Error::Unknown {
            what: "scorer",
            name: other.to_string(),
            expected: "stub, oracle, none, adapter:<command>".into(),
        }),
    }
}

pub struct Pipeline {
    pub index: SearchIndex,
    pub channels: Vec<ChannelSpec>,
    pub scorer: Option<ScorerHandle>,
    pub fuse: Option<FusionMethod>,
}

/// Every list one query produced.
pub struct QueryResult {
    pub per_channel: Vec<(String, RankedList)>,
    pub ranking: RankedList,
}

impl Pipeline {
    /// `ground_truth` sees the loaded index before the scorer is built.
    pub fn open<F>(args: &PipelineArgs, ground_truth: F) -> Result<Self>
    where
        F: FnOnce(&SearchIndex) -> Result<HashMap<String, String>>,
    {
        let channels = parse_channels(&args.recall.channels, args.recall.k as usize)?;
        if args.scorer == "none" && args.fuse.is_none() && channels.len() > 1 {
            return Err(usage("with --scorer none, give a single channel or choose --fuse"));
        }
        if args.scorer == "none" && args.fuse.is_some() && channels.len() < 2 {
            return Err(usage("fusing without a scorer needs at least two channels"));
        }
        if args.scorer != "none" && channels.iter().any(|c| c.name == RERANK_MODEL) && args.fuse.is_some() {
            return Err(usage(format!("channel name `{RERANK_MODEL}` is reserved for the scorer when fusing")));
        }
        let index = open_index(&args.recall, &channels)?;
        let gt = ground_truth(&index)?;
        let scorer = scorer_handle(&args.scorer, gt, &index)?;
        Ok(Self {
            index,
            channels,
            scorer,
            fuse: args.fuse,
        })
    }

    /// Name the final ranking carries in run dumps.
    pub fn final_name(&self) -> String {
        match (self.fuse, &self.scorer) {
            (Some(m), _) => format!("fused-{m}"),
            (None, Some(_)) => RERANK_MODEL.to_string(),
            (None, None) => self.channels[0].name.clone(),
        }
    }

    pub fn run(&self, id: &str, text: &str) -> Result<QueryResult> {
        let query = self.index.query(id, text);
        let per_channel = self
            .channels
            .iter()
            .map(|c| Ok((c.name.clone(), recall_channel(&self.index, &query, c)?)))
            .collect::<Result<Vec<_>>>()?;
        let ranking = match (&self.scorer, self.fuse) {
            (Some(scorer), fuse) => {
                let candidates = combine_candidates(id, per_channel.clone());
                let reranked = rerank(&self.index, &query, &candidates, scorer)?;
                match fuse {
                    Some(method) => {
                        let mut pool = per_channel.clone();
                        pool.push((RERANK_MODEL.to_string(), reranked));
                        fuse_scores(&pool, method)?
                    }
                    None => reranked,
                }
            }
            (None, Some(method)) => fuse_scores(&per_channel, method)?,
            (None, None) => per_channel[0].1.clone(),
        };
        Ok(QueryResult { per_channel, ranking })
    }
}


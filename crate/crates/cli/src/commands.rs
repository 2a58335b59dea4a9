//! One function per subcommand.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};
use toss::corpus::{load_corpus, load_queries, preprocess_queries, Corpus, QueryRecord};
use toss::engine::SearchIndex;
use toss::fusion::fuse_scores;
use toss::metrics::{
    evaluate_run, measure_latency, overlap_stats, read_trec_run, write_trec_run, EvalReport, LatencyConfig, OverlapTable,
};
use toss::ranking::RankedList;
use toss::{Error, Result};

use crate::args::{EvalArgs, FuseArgs, IndexArgs, OverlapArgs, SearchArgs};
use crate::pipeline::{open_index, parse_channels, parse_provider, Pipeline, QueryResult};

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn index(args: &IndexArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus, &args.language)?;
    let n = corpus.len();
    let mut index = SearchIndex::build(corpus, args.prep)?;
    if let Some(spec) = &args.embed {
        let provider = parse_provider(spec)?.open(args.prep)?;
        index = index.with_embeddings(Arc::from(provider))?;
    }
    index.save(&args.out)?;
    let dense = match &index.embeddings {
        Some(m) => format!(", {}-d embeddings from {}", m.dim(), m.provider_name()),
        None => String::new(),
    };
    eprintln!(
        "indexed {n} documents into {} (prep {}, {} terms{dense})",
        args.out.display(),
        index.prep(),
        index.lexical.vocabulary_size()
    );
    Ok(())
}

pub fn search(args: &SearchArgs) -> Result<()> {
    const QUERY_ID: &str = "query";
    let mut gt = HashMap::new();
    if let Some(id) = &args.gt {
        gt.insert(QUERY_ID.to_string(), id.clone());
    } else if args.pipeline.scorer == "oracle" {
        return Err(Error::InvalidArgument("the oracle scorer needs --gt <doc-id>".into()));
    }
    let pipeline = Pipeline::open(&args.pipeline, |_| Ok(gt))?;
    if let Some(id) = &args.gt {
        if pipeline.index.corpus.ordinal_of(id).is_none() {
            return Err(Error::UnknownGroundTruth {
                query_id: QUERY_ID.into(),
                gt_id: id.clone(),
            });
        }
    }
    let result = pipeline.run(QUERY_ID, &args.query)?;
    let corpus = &pipeline.index.corpus;
    let rows: Vec<Value> = result
        .ranking
        .hits()
        .iter()
        .take(args.top as usize)
        .enumerate()
        .map(|(i, h)| {
            let channels: Vec<&str> = result
                .per_channel
                .iter()
                .filter(|(_, l)| l.rank_of(h.ordinal).is_some())
                .map(|(n, _)| n.as_str())
                .collect();
            json!({ "rank": i + 1, "id": corpus.id_of(h.ordinal), "score": h.score, "channels": channels })
        })
        .collect();
    let mut out = std::io::stdout().lock();
    let write = |out: &mut dyn Write| -> std::io::Result<()> {
        if args.json {
            serde_json::to_writer_pretty(&mut *out, &rows)?;
            writeln!(out)
        } else {
            for r in &rows {
                let channels: Vec<&str> = r["channels"].as_array().unwrap().iter().filter_map(Value::as_str).collect();
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    r["rank"],
                    r["id"].as_str().unwrap(),
                    r["score"],
                    channels.join(",")
                )?;
            }
            Ok(())
        }
    };
    write(&mut out).map_err(io_err(Path::new("<stdout>")))
}

fn queries_for(path: &Path, corpus: &Corpus, index: &SearchIndex) -> Result<Vec<QueryRecord>> {
    let mut queries = load_queries(path, corpus)?;
    preprocess_queries(&mut queries, index.prep());
    Ok(queries)
}

fn per_channel_reports(
    queries: &[QueryRecord],
    names: &[String],
    lists: &HashMap<String, Vec<(String, RankedList)>>,
) -> BTreeMap<String, EvalReport> {
    let ids: Vec<String> = queries.iter().map(|q| q.id.clone()).collect();
    names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let ranks = queries.iter().map(|q| lists[&q.id][c].1.rank_of(q.gt_ordinal)).collect();
            (name.clone(), EvalReport::from_ranks(ids.clone(), ranks))
        })
        .collect()
}

fn dump_runs(
    path: &Path,
    corpus: &Corpus,
    queries: &[QueryRecord],
    lists: &HashMap<String, Vec<(String, RankedList)>>,
    final_name: &str,
    finals: &HashMap<String, RankedList>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for q in queries {
        for (name, list) in &lists[&q.id] {
            if name != final_name {
                write_trec_run(&mut out, corpus, &q.id, name, list).map_err(io_err(path))?;
            }
        }
        write_trec_run(&mut out, corpus, &q.id, final_name, &finals[&q.id]).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn emit_report(report: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    match out {
        Some(path) => std::fs::write(path, text).map_err(io_err(path)),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let mut queries = Vec::new();
    let pipeline = Pipeline::open(&args.pipeline, |index| {
        queries = queries_for(&args.queries, &index.corpus, index)?;
        Ok(queries.iter().map(|q| (q.id.clone(), q.gt_id.clone())).collect())
    })?;

    let jobs = if args.latency && args.jobs > 1 {
        eprintln!("note: --jobs forced to 1 while measuring latency");
        1
    } else {
        args.jobs as usize
    };
    let collected: Mutex<HashMap<String, QueryResult>> = Mutex::new(HashMap::new());
    let report = evaluate_run(
        |q| {
            let result = pipeline.run(&q.id, &q.text)?;
            let ranking = result.ranking.clone();
            collected.lock().unwrap().insert(q.id.clone(), result);
            Ok(ranking)
        },
        &queries,
        jobs,
    )?;
    let invocations = pipeline.scorer.as_ref().map(|s| s.invocations());

    let timing = if args.latency {
        let cfg = LatencyConfig {
            sample_size: args.sample_size,
            repeats: args.repeats,
            seed: args.seed,
        };
        Some(measure_latency(|q| Ok(pipeline.run(&q.id, &q.text)?.ranking), &queries, cfg)?)
    } else {
        None
    };

    let collected = collected.into_inner().unwrap();
    let (lists, finals): (HashMap<_, _>, HashMap<_, _>) = collected
        .into_iter()
        .map(|(id, r)| ((id.clone(), r.per_channel), (id, r.ranking)))
        .unzip();
    let names: Vec<String> = pipeline.channels.iter().map(|c| c.name.clone()).collect();
    let channel_reports = per_channel_reports(&queries, &names, &lists);
    let final_name = pipeline.final_name();
    if let Some(path) = &args.run_dump {
        dump_runs(path, &pipeline.index.corpus, &queries, &lists, &final_name, &finals)?;
    }

    let mut table: Vec<(String, &EvalReport)> = channel_reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    if pipeline.scorer.is_some() || pipeline.fuse.is_some() {
        table.push((final_name.clone(), &report));
    }
    print_table(&table);
    if let Some(t) = &timing {
        eprintln!(
            "latency: {:.3} ± {:.3} ms per query ({} queries x {} repeats, seed {})",
            t.per_query_mean * 1e3,
            t.per_query_std * 1e3,
            t.sample_size,
            t.repeats,
            t.seed
        );
    }

    let full = json!({
        "index": args.pipeline.recall.index,
        "queries": args.queries,
        "prep": pipeline.index.prep().to_string(),
        "channels": pipeline.channels.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        "scorer": args.pipeline.scorer,
        "fuse": args.pipeline.fuse.map(|m| m.to_string()),
        "seed": args.seed,
        "jobs": jobs,
        "final": final_name,
        "report": report,
        "channel_reports": channel_reports,
        "scorer_invocations": invocations,
        "timing": timing,
    });
    emit_report(&full, args.out.as_deref())
}

fn print_table(rows: &[(String, &EvalReport)]) {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(4);
    let mut header = format!("{:width$}  {:>7}", "run", "MRR");
    if let Some((_, r)) = rows.first() {
        for k in r.recall_at.keys() {
            header.push_str(&format!("  {:>7}", format!("R@{k}")));
        }
    }
    eprintln!("{header}");
    for (name, r) in rows {
        let mut line = format!("{name:width$}  {:>7.4}", r.mrr);
        for v in r.recall_at.values() {
            line.push_str(&format!("  {v:>7.4}"));
        }
        eprintln!("{line}");
    }
}

pub fn overlap(args: &OverlapArgs) -> Result<()> {
    let channels = parse_channels(&args.recall.channels, args.top as usize)?;
    if channels.len() < 2 {
        return Err(Error::InvalidArgument("overlap needs at least two channels".into()));
    }
    let index = open_index(&args.recall, &channels)?;
    let queries = queries_for(&args.queries, &index.corpus, &index)?;
    let mut lists: BTreeMap<String, Vec<Vec<usize>>> = BTreeMap::new();
    for q in &queries {
        let sq = index.query(q.id.clone(), q.text.clone());
        for c in &channels {
            let list = toss::fusion::recall_channel(&index, &sq, c).map_err(|e| Error::Query {
                query_id: q.id.clone(),
                source: Box::new(e),
            })?;
            lists.entry(c.name.clone()).or_default().push(list.ordinals().collect());
        }
    }
    let gts: Vec<usize> = queries.iter().map(|q| q.gt_ordinal).collect();
    let table = overlap_stats(&lists, &gts, args.top as usize)?;
    let text = overlap_text(&table);
    if args.json {
        eprint!("{text}");
        emit_report(&serde_json::to_value(&table).expect("table serializes"), None)
    } else {
        print!("{text}");
        Ok(())
    }
}

fn overlap_text(t: &OverlapTable) -> String {
    let width = t.rows.iter().map(|r| r.channels.join("+").len()).max().unwrap_or(0).max(8);
    let mut s = format!("top {} over {} queries\n", t.top, t.n_queries);
    s.push_str(&format!("{:width$}  {:>13}  {:>12}\n", "channels", "common_recall", "gt_exclusive"));
    for r in &t.rows {
        s.push_str(&format!("{:width$}  {:>13}  {:>12}\n", r.channels.join("+"), r.common_recall, r.gt_exclusive));
    }
    for (name, n) in &t.unique_gt {
        s.push_str(&format!("unique ground truth from {name}: {n}\n"));
    }
    s
}

pub fn fuse(args: &FuseArgs) -> Result<()> {
    let index = SearchIndex::load(&args.index)?;
    let queries = queries_for(&args.queries, &index.corpus, &index)?;
    let mut models: BTreeMap<String, BTreeMap<String, RankedList>> = BTreeMap::new();
    for path in &args.runs {
        let file = File::open(path).map_err(io_err(path))?;
        let runs = read_trec_run(BufReader::new(file), &index.corpus).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.clone(),
                line,
                message,
            },
            other => other,
        })?;
        for (channel, per_query) in runs {
            if models.insert(channel.clone(), per_query).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "channel `{channel}` appears in more than one run file"
                )));
            }
        }
    }
    if models.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fusion needs at least two models, the runs hold {}",
            models.len()
        )));
    }
    let names: Vec<String> = models.keys().cloned().collect();
    let lists: HashMap<String, Vec<(String, RankedList)>> = queries
        .iter()
        .map(|q| {
            let pool = names
                .iter()
                .map(|n| (n.clone(), models[n].get(&q.id).cloned().unwrap_or_default()))
                .collect();
            (q.id.clone(), pool)
        })
        .collect();
    let report = evaluate_run(|q| fuse_scores(&lists[&q.id], args.method), &queries, 1)?;
    let final_name = format!("fused-{}", args.method);
    if let Some(path) = &args.run_dump {
        let finals = queries
            .iter()
            .map(|q| Ok((q.id.clone(), fuse_scores(&lists[&q.id], args.method)?)))
            .collect::<Result<HashMap<_, _>>>()?;
        dump_runs(path, &index.corpus, &queries, &lists, &final_name, &finals)?;
    }
    let channel_reports = per_channel_reports(&queries, &names, &lists);
    let mut table: Vec<(String, &EvalReport)> = channel_reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    table.push((final_name.clone(), &report));
    print_table(&table);
    let full = json!({
        "index": args.index,
        "queries": args.queries,
        "runs": args.runs,
        "method": args.method.to_string(),
        "final": final_name,
        "report": report,
        "channel_reports": channel_reports,
    });
    emit_report(&full, args.out.as_deref())
}

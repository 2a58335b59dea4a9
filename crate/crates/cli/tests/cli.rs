use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_toss");

fn toss(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("TOSS_ADAPTER").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "{}", stderr(out));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const DOCS: [(&str, &str); 8] = [
    ("read", "def read_file(path):\n    with open(path) as f:\n        return f.read()"),
    ("write", "def write_file(path, data):\n    with open(path, 'w') as f:\n        f.write(data)"),
    ("json", "def load_json(path):\n    return json.loads(read_file(path))"),
    ("server", "class HTTPServer:\n    def start(self, port):\n        self.port = port"),
    ("sort", "def sort_items(items, key):\n    return sorted(items, key=key)"),
    ("zebra", "def zebra_stripes(n):\n    return ['zebra'] * n"),
    ("merge", "def merge_dicts(a, b):\n    out = dict(a)\n    out.update(b)\n    return out"),
    ("hash", "def file_hash(path):\n    return hashlib.sha1(open(path, 'rb').read()).hexdigest()"),
];

const QUERIES: [(&str, &str, &str); 5] = [
    ("q1", "read a file", "read"),
    ("q2", "parse json from a path", "json"),
    ("q3", "start the http server", "server"),
    ("q4", "merge two dictionaries", "merge"),
    ("q5", "zebra stripes", "zebra"),
];

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        Self::with_docs(DOCS.iter().map(|(id, c)| (id.to_string(), c.to_string())).collect())
    }

    fn with_docs(docs: Vec<(String, String)>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let mut corpus = String::new();
        for (id, code) in &docs {
            corpus.push_str(&serde_json::json!({ "id": id, "code": code }).to_string());
            corpus.push('\n');
        }
        std::fs::write(root.join("corpus.jsonl"), corpus).unwrap();
        let mut queries = String::new();
        for (id, text, gt) in QUERIES {
            queries.push_str(&serde_json::json!({ "id": id, "query": text, "gt_id": gt }).to_string());
            queries.push('\n');
        }
        std::fs::write(root.join("queries.jsonl"), queries).unwrap();
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn index(&self, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let corpus = self.path("corpus.jsonl");
        let mut args = vec!["index", "--corpus", p(&corpus), "--out", p(&out)];
        args.extend_from_slice(extra);
        let o = toss(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    }
}

fn stub_command(args: &str) -> String {
    format!("'{BIN}' adapter-stub {args}")
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&toss(&["--help"])), 0);
    assert_eq!(code(&toss(&["--version"])), 0);
    assert_eq!(code(&toss(&[])), 1);
    assert_eq!(code(&toss(&["frobnicate"])), 1);
}

#[test]
fn index_writes_artifacts_and_records_prep() {
    let fx = Fixture::new();
    let ix = fx.index("ix", &["--prep", "sps,ds,rs,pos", "--embed", "stub:32"]);
    for f in ["corpus.toss", "lexical.toss", "dense.toss"] {
        assert!(ix.join(f).exists(), "{f}");
    }
    let bare = fx.index("bare", &["--prep", "none"]);
    assert!(!bare.join("dense.toss").exists());
    let q = fx.path("queries.jsonl");
    let report = json(&toss(&["eval", "--index", p(&bare), "--queries", p(&q), "--channel", "bm25", "--scorer", "none"]));
    assert_eq!(report["prep"], "none");
    let wrong = toss(&["search", "--index", p(&bare), "--channel", "bm25", "--prep", "all", "--query", "x"]);
    assert_eq!(code(&wrong), 2);
    assert!(stderr(&wrong).contains("preprocessing mismatch"));
}

#[test]
fn missing_corpus_names_the_path() {
    let fx = Fixture::new();
    let missing = fx.path("absent.jsonl");
    let o = toss(&["index", "--corpus", p(&missing), "--out", p(&fx.path("ix"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("absent.jsonl"), "{}", stderr(&o));
}

#[test]
fn malformed_corpus_names_the_line() {
    let fx = Fixture::new();
    let bad = fx.path("bad.jsonl");
    std::fs::write(&bad, "{\"id\":\"a\",\"code\":\"x\"}\n{not json\n").unwrap();
    let o = toss(&["index", "--corpus", p(&bad), "--out", p(&fx.path("ix"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.jsonl:2"), "{}", stderr(&o));
}

/// Okapi BM25 recomputed from whitespace-free lowercase alphanumeric runs.
fn brute_bm25(docs: &[Vec<String>], q: &[String]) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let df = |t: &str| docs.iter().filter(|d| d.iter().any(|x| x == t)).count() as f64;
    let vocab: HashSet<&String> = docs.iter().flatten().collect();
    let pos: Vec<f64> = vocab
        .iter()
        .map(|t| ((n - df(t) + 0.5) / (df(t) + 0.5)).ln())
        .filter(|v| *v > 0.0)
        .collect();
    let mean = pos.iter().sum::<f64>() / pos.len().max(1) as f64;
    docs.iter()
        .map(|d| {
            q.iter()
                .map(|t| {
                    let tf = d.iter().filter(|x| *x == t).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let raw = ((n - df(t) + 0.5) / (df(t) + 0.5)).ln();
                    let idf = if raw < 0.0 { 0.25 * mean } else { raw };
                    idf * tf * 2.5 / (tf + 1.5 * (0.25 + 0.75 * d.len() as f64 / avg))
                })
                .sum()
        })
        .collect()
}

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

#[test]
fn search_matches_brute_force_bm25() {
    let fx = Fixture::new();
    let ix = fx.index("ix", &["--prep", "none"]);
    let query = "zebra stripes path";
    let o = toss(&["search", "--index", p(&ix), "--channel", "bm25:10", "--scorer", "none", "--json", "--query", query]);
    let rows = json(&o);
    let docs: Vec<Vec<String>> = DOCS.iter().map(|(_, c)| words(c)).collect();
    let scores = brute_bm25(&docs, &words(query));
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows[0]["id"], "zebra");
    assert_eq!(rows.len(), docs.len());
    for (row, &o) in rows.iter().zip(&order) {
        assert_eq!(row["id"], DOCS[o].0);
        assert!((row["score"].as_f64().unwrap() - scores[o]).abs() < 1e-9);
        assert_eq!(row["channels"][0], "bm25");
    }

    let table = toss(&["search", "--index", p(&ix), "--channel", "bm25", "--top", "2", "--query", query]);
    let lines: Vec<String> = stdout(&table).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("1\tzebra\t"), "{}", lines[0]);
}

#[test]
fn usage_errors_exit_one() {
    let fx = Fixture::new();
    let ix = fx.index("ix", &[]);
    let ix = p(&ix);
    let o = toss(&["search", "--index", ix, "--channel", "bm25", "--k", "0", "--query", "x"]);
    assert_eq!(code(&o), 1);
    let o = toss(&["search", "--index", ix, "--channel", "bm25:0", "--query", "x"]);
    assert_eq!(code(&o), 1);
    let o = toss(&["search", "--index", ix, "--channel", "lucene:5", "--query", "x"]);
    assert_eq!(code(&o), 1);
    for kind in ["jaccard", "bow", "tfidf", "bm25", "dense"] {
        assert!(stderr(&o).contains(kind), "{}", stderr(&o));
    }
    let o = toss(&["search", "--index", ix, "--channel", "bm25", "--channel", "bm25", "--query", "x"]);
    assert_eq!(code(&o), 1, "duplicate channel names");
    let o = toss(&["search", "--index", ix, "--channel", "bm25", "--scorer", "magic", "--query", "x"]);
    assert_eq!(code(&o), 1);
    let o = toss(&["search", "--index", ix, "--channel", "bm25", "--scorer", "oracle", "--query", "x"]);
    assert_eq!(code(&o), 1);
    let o = toss(&["search", "--index", ix, "--channel", "bm25", "--channel", "tfidf", "--scorer", "none", "--query", "x"]);
    assert_eq!(code(&o), 1);
    let o = toss(&["search", "--index", ix, "--channel", "bm25", "--scorer", "adapter", "--query", "x"]);
    assert_eq!(code(&o), 1, "adapter without a command or TOSS_ADAPTER");
    let o = toss(&["search", "--index", ix, "--channel", "dense", "--query", "x"]);
    assert_eq!(code(&o), 1, "dense channel on an index without embeddings");
}

#[test]
fn oracle_over_full_recall_is_perfect_and_reports_are_deterministic() {
    let fx = Fixture::new();
    let ix = fx.index("ix", &["--embed", "stub:16"]);
    let q = fx.path("queries.jsonl");
    let args = ["eval", "--index", p(&ix), "--queries", p(&q), "--channel", "bm25:all", "--scorer", "oracle"];
    let report = json(&toss(&args));
    assert_eq!(report["report"]["mrr"], 1.0);
    for (_, v) in report["report"]["recall_at"].as_object().unwrap() {
        assert_eq!(*v, 1.0);
    }
    assert_eq!(report["scorer_invocations"], (DOCS.len() * QUERIES.len()) as u64);

    let mixed = ["eval", "--index", p(&ix), "--queries", p(&q), "--channel", "bm25:3", "--channel", "dense:3", "--seed", "9"];
    let a = toss(&mixed);
    let b = toss(&mixed);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let mut parallel = mixed.to_vec();
    parallel.extend(["--jobs", "4"]);
    let c = json(&toss(&parallel));
    let a = json(&a);
    assert_eq!(a["report"], c["report"]);
    assert_eq!(a["channel_reports"], c["channel_reports"]);
}

#[test]
fn eval_writes_report_file_run_dump_and_latency() {
    let fx = Fixture::new();
    let ix = fx.index("ix", &["--embed", "stub:16"]);
    let q = fx.path("queries.jsonl");
    let (out, dump) = (fx.path("report.json"), fx.path("run.trec"));
    let o = toss(&[
        "eval", "--index", p(&ix), "--queries", p(&q), "--channel", "bm25:3", "--channel", "dense:3", "--latency",
        "--sample-size", "3", "--repeats", "2", "--seed", "5", "--jobs", "3", "--out", p(&out), "--run-dump", p(&dump),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let err = stderr(&o);
    assert!(err.contains("MRR") && err.contains("latency"), "{err}");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["jobs"], 1);
    assert_eq!(report["timing"]["seed"], 5);
    assert_eq!(report["timing"]["sample_size"], 3);
    assert_eq!(report["timing"]["repeats"], 2);
    assert!(report["timing"]["per_query_std"].as_f64().unwrap() >= 0.0);

    let text = std::fs::read_to_string(&dump).unwrap();
    let mut per_channel: HashMap<&str, usize> = HashMap::new();
    for line in text.lines() {
        let f: Vec<&str> = line.split(' ').collect();
        assert_eq!(f.len(), 6);
        assert_eq!(f[1], "Q0");
        *per_channel.entry(f[5]).or_default() += 1;
    }
    assert_eq!(per_channel["bm25"], 3 * QUERIES.len());
    assert_eq!(per_channel["dense"], 3 * QUERIES.len());
    assert!(per_channel["rerank"] >= 3 * QUERIES.len());

    // the dump feeds straight back into fusion
    let fused = json(&toss(&["fuse", "--index", p(&ix), "--queries", p(&q), "--run", p(&dump), "--method", "max"]));
    assert_eq!(fused["channel_reports"]["bm25"], report["channel_reports"]["bm25"]);
}

#[test]
fn fusing_run_files_matches_hand_computation() {
    let docs = (0..5).map(|i| (format!("d{i}"), format!("def f{i}(): pass"))).collect();
    let fx = Fixture::with_docs(docs);
    let ix = fx.index("ix", &[]);
    let queries = fx.path("fq.jsonl");
    std::fs::write(&queries, "{\"id\":\"a\",\"query\":\"x\",\"gt_id\":\"d0\"}\n{\"id\":\"b\",\"query\":\"x\",\"gt_id\":\"d2\"}\n{\"id\":\"c\",\"query\":\"x\",\"gt_id\":\"d4\"}\n").unwrap();
    let models: [(&str, &[(usize, f64)]); 3] = [
        ("A", &[(0, 10.0), (1, 6.0), (2, 2.0)]),
        ("B", &[(1, 0.9), (3, 0.5), (0, 0.1)]),
        ("C", &[(2, 4.0), (0, 3.0), (1, 2.0), (4, 1.0), (3, 0.0)]),
    ];
    let mut runs = Vec::new();
    for (name, hits) in models {
        let path = fx.path(&format!("{name}.trec"));
        let mut text = String::new();
        for qid in ["a", "b", "c"] {
            for (rank, (d, s)) in hits.iter().enumerate() {
                text.push_str(&format!("{qid} Q0 d{d} {} {s} {name}\n", rank + 1));
            }
        }
        std::fs::write(&path, text).unwrap();
        runs.push(path);
    }
    let run = |method: &str| {
        let mut args = vec!["fuse", "--index", p(&ix), "--queries", p(&queries), "--method", method];
        for r in &runs {
            args.extend(["--run", p(r)]);
        }
        json(&toss(&args))["report"]["mrr"].as_f64().unwrap()
    };
    // combsum orders d1 d0 d2 d3 d4: gts at ranks 2, 3, 5
    assert!((run("combsum") - (1.0 / 2.0 + 1.0 / 3.0 + 1.0 / 5.0) / 3.0).abs() < 1e-12);
    // combanz orders d2 d0 d1 d3 d4: ranks 2, 1, 5
    assert!((run("combanz") - (1.0 / 2.0 + 1.0 + 1.0 / 5.0) / 3.0).abs() < 1e-12);
    // borda gives d0 and d1 nine points each; the lower ordinal wins: ranks 1, 3, 5
    assert!((run("borda") - (1.0 + 1.0 / 3.0 + 1.0 / 5.0) / 3.0).abs() < 1e-12);

    let single = toss(&["fuse", "--index", p(&ix), "--queries", p(&queries), "--run", p(&runs[0])]);
    assert_eq!(code(&single), 1);
    let twice = toss(&["fuse", "--index", p(&ix), "--queries", p(&queries), "--run", p(&runs[0]), "--run", p(&runs[0])]);
    assert_eq!(code(&twice), 1);
}

#[test]
fn overlap_counts() {
    let fx = Fixture::new();
    let ix = fx.index("ix", &["--embed", "stub:16"]);
    let q = fx.path("queries.jsonl");
    let n = QUERIES.len();
    let same = json(&toss(&[
        "overlap", "--index", p(&ix), "--queries", p(&q), "--channel", "a:bm25:1", "--channel", "b:bm25:1", "--json",
    ]));
    let rows = same["rows"].as_array().unwrap();
    let both = rows.iter().find(|r| r["channels"].as_array().unwrap().len() == 2).unwrap();
    assert_eq!(both["common_recall"], n);

    let at = |top: &str| {
        json(&toss(&[
            "overlap", "--index", p(&ix), "--queries", p(&q), "--channel", "bm25", "--channel", "dense", "--top", top,
            "--json",
        ]))
    };
    let (t1, t5) = (at("1"), at("5"));
    for (a, b) in t1["rows"].as_array().unwrap().iter().zip(t5["rows"].as_array().unwrap()) {
        assert!(a["common_recall"].as_u64() <= b["common_recall"].as_u64());
    }
    let text = toss(&["overlap", "--index", p(&ix), "--queries", p(&q), "--channel", "bm25", "--channel", "dense"]);
    assert!(stdout(&text).contains("bm25+dense"), "{}", stdout(&text));
    let one = toss(&["overlap", "--index", p(&ix), "--queries", p(&q), "--channel", "bm25"]);
    assert_eq!(code(&one), 1);
}

/// A live protocol session with the built-in stub adapter.
struct Session {
    child: std::process::Child,
    out: BufReader<std::process::ChildStdout>,
}

impl Session {
    fn start(args: &[&str]) -> Self {
        let mut child = Command::new(BIN)
            .arg("adapter-stub")
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let out = BufReader::new(child.stdout.take().unwrap());
        Self { child, out }
    }

    fn ask(&mut self, line: &str) -> Value {
        let stdin = self.child.stdin.as_mut().unwrap();
        writeln!(stdin, "{line}").unwrap();
        stdin.flush().unwrap();
        let mut reply = String::new();
        self.out.read_line(&mut reply).unwrap();
        serde_json::from_str(&reply).unwrap()
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        drop(self.child.stdin.take());
        let _ = self.child.wait();
    }
}

#[test]
fn adapter_protocol_conformance() {
    let fx = Fixture::new();
    let ix = fx.index("ix", &[]);
    let texts: Vec<String> = (0..300).map(|i| format!("read file number{i} json")).collect();

    let mut emb = Session::start(&["--mode", "embedder", "--dim", "24"]);
    let info = emb.ask(r#"{"op":"info"}"#);
    assert_eq!(info["type"], "embedder");
    assert_eq!(info["dim"], 24);
    let req = |t: &[String]| serde_json::json!({ "op": "embed", "texts": t }).to_string();
    let whole = emb.ask(&req(&texts[..200]));
    let vectors = whole["vectors"].as_array().unwrap();
    assert_eq!(vectors.len(), 200);
    assert!(vectors.iter().all(|v| v.as_array().unwrap().len() == 24));
    assert_eq!(emb.ask(&req(&texts[..200])), whole, "determinism");
    let (a, b) = (emb.ask(&req(&texts[..73])), emb.ask(&req(&texts[73..200])));
    let split: Vec<&Value> = a["vectors"].as_array().unwrap().iter().chain(b["vectors"].as_array().unwrap()).collect();
    assert_eq!(split, vectors.iter().collect::<Vec<_>>(), "batch boundaries");
    let over = emb.ask(&req(&texts[..257]));
    assert!(over["error"].as_str().unwrap().contains("256"));
    assert!(emb.ask("{nonsense").get("error").is_some());
    assert!(emb.ask(r#"{"op":"score","pairs":[["a","b"]]}"#).get("error").is_some());
    assert_eq!(emb.ask(r#"{"op":"info"}"#), info, "session survives errors");

    let mut scorer = Session::start(&["--mode", "pair_scorer", "--index", p(&ix)]);
    assert_eq!(scorer.ask(r#"{"op":"info"}"#)["type"], "pair_scorer");
    let pairs: Vec<(String, String)> = texts.iter().take(50).map(|t| ("read json".to_string(), t.clone())).collect();
    let req = |p: &[(String, String)]| serde_json::json!({ "op": "score", "pairs": p }).to_string();
    let whole = scorer.ask(&req(&pairs));
    assert_eq!(whole["scores"].as_array().unwrap().len(), 50);
    let singles: Vec<Value> = pairs.iter().map(|pr| scorer.ask(&req(std::slice::from_ref(pr)))["scores"][0].clone()).collect();
    assert_eq!(whole["scores"].as_array().unwrap(), &singles);
}

#[test]
fn adapter_scorer_and_embedder_match_in_process_stubs() {
    // more documents than one batch, so the client must split requests
    let docs: Vec<(String, String)> = (0..300)
        .map(|i| {
            let (id, code) = DOCS[i % DOCS.len()];
            (format!("{id}{i}"), format!("{code}\n# variant {}", i % 7))
        })
        .collect();
    let fx = Fixture::with_docs(docs);
    let stub_ix = fx.index("stub", &["--embed", "stub:32"]);
    let embedder = stub_command("--mode embedder --dim 32 --prep all");
    let adapter_ix = fx.index("adapter", &["--embed", &format!("adapter:{embedder}")]);
    let query = "read a json file from a path";

    let search = |ix: &Path, extra: &[&str]| {
        let mut args = vec!["search", "--index", p(ix), "--query", query, "--top", "300", "--json"];
        args.extend_from_slice(extra);
        json(&toss(&args))
    };
    let dense_stub = search(&stub_ix, &["--channel", "dense:all", "--scorer", "none"]);
    let dense_adapter = search(&adapter_ix, &["--channel", "dense:all", "--scorer", "none", "--embed", &format!("adapter:{embedder}")]);
    assert_eq!(dense_stub, dense_adapter);

    let scorer = stub_command(&format!("--mode pair_scorer --index '{}'", p(&stub_ix)));
    let in_process = search(&stub_ix, &["--channel", "bm25:all", "--scorer", "stub"]);
    let via_adapter = search(&stub_ix, &["--channel", "bm25:all", "--scorer", &format!("adapter:{scorer}")]);
    assert_eq!(in_process.as_array().unwrap().len(), 300);
    assert_eq!(in_process, via_adapter);

    let o = Command::new(BIN)
        .args(["search", "--index", p(&stub_ix), "--query", query, "--channel", "bm25:20", "--scorer", "adapter", "--top", "300", "--json"])
        .env("TOSS_ADAPTER", &scorer)
        .output()
        .unwrap();
    assert_eq!(json(&o), search(&stub_ix, &["--channel", "bm25:20", "--scorer", "stub"]));

    let wrong_dim = stub_command("--mode embedder --dim 8");
    let o = toss(&["search", "--index", p(&stub_ix), "--query", query, "--channel", "dense", "--embed", &format!("adapter:{wrong_dim}")]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("dimension"));
}

#[test]
fn adapter_failures_exit_three() {
    let fx = Fixture::new();
    let ix = fx.index("ix", &[]);
    for cmd in ["false", "echo not-json", "echo '{\"name\":\"x\",\"type\":\"embedder\",\"dim\":4}'"] {
        let o = toss(&["search", "--index", p(&ix), "--channel", "bm25", "--query", "x", "--scorer", &format!("adapter:{cmd}")]);
        assert_eq!(code(&o), 3, "{cmd}: {}", stderr(&o));
    }
    let o = toss(&["index", "--corpus", p(&fx.path("corpus.jsonl")), "--out", p(&fx.path("e")), "--embed", "adapter:false"]);
    assert_eq!(code(&o), 3);
}

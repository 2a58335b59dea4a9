//! Line-delimited JSON protocol for out-of-process models.
//!
//! ```text
//! → {"op":"info"}                        ← {"name":str,"type":"embedder"|"pair_scorer","dim":int?}
//! → {"op":"embed","texts":[str,...]}     ← {"vectors":[[float,...],...]}
//! → {"op":"score","pairs":[[str,str],...]} ← {"scores":[float,...]}
//!                                        ← {"error":str}   (any request)
//! ```
//!
//! One process serves one model in one mode. Requests carry at most
//! [`BATCH_LIMIT`] items; the client splits larger inputs.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const BATCH_LIMIT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterType {
    Embedder,
    PairScorer,
}

/// Handshake reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterInfo {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: AdapterType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Info,
    Embed { texts: Vec<String> },
    Score { pairs: Vec<(String, String)> },
}

/// A running adapter process.
pub struct AdapterProcess {
    command: String,
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
    info: AdapterInfo,
}

impl AdapterProcess {
    /// Starts `command` through `sh -c` and performs the `info` handshake.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Adapter(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().map(BufWriter::new);
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut process = Self {
            command: command.to_string(),
            child,
            stdin,
            stdout,
            info: AdapterInfo {
                name: String::new(),
                kind: AdapterType::Embedder,
                dim: None,
            },
        };
        let reply = process.request(&Request::Info)?;
        process.info = serde_json::from_value(reply.clone())
            .map_err(|e| Error::Adapter(format!("`{command}`: malformed info reply {reply}: {e}")))?;
        Ok(process)
    }

    pub fn info(&self) -> &AdapterInfo {
        &self.info
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn request(&mut self, req: &Request) -> Result<Value> {
        let cmd = self.command.clone();
        let fail = |msg: String| Error::Adapter(format!("`{cmd}`: {msg}"));
        let line = serde_json::to_string(req).map_err(|e| fail(e.to_string()))?;
        let stdin = self.stdin.as_mut().ok_or_else(|| fail("stdin closed".into()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| fail(format!("write failed: {e}")))?;
        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| fail(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(fail("process exited without replying".into()));
        }
        let value: Value =
            serde_json::from_str(reply.trim_end()).map_err(|e| fail(format!("malformed reply `{}`: {e}", reply.trim_end())))?;
        if let Some(err) = value.get("error") {
            let msg = err.as_str().map(str::to_owned).unwrap_or_else(|| err.to_string());
            return Err(fail(msg));
        }
        Ok(value)
    }

    /// Embeds `texts`, batching at [`BATCH_LIMIT`].
    pub fn embed(&mut self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(BATCH_LIMIT) {
            let reply = self.request(&Request::Embed {
                texts: chunk.iter().map(|t| t.to_string()).collect(),
            })?;
            let vectors: Vec<Vec<f64>> = field(&reply, "vectors", &self.command)?;
            if vectors.len() != chunk.len() {
                return Err(Error::Adapter(format!(
                    "`{}`: sent {} texts, got {} vectors",
                    self.command,
                    chunk.len(),
                    vectors.len()
                )));
            }
            out.extend(vectors);
        }
        Ok(out)
    }

    /// Scores `(query, code)` pairs, batching at [`BATCH_LIMIT`].
    pub fn score(&mut self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(BATCH_LIMIT) {
            let reply = self.request(&Request::Score {
                pairs: chunk.iter().map(|(q, c)| (q.to_string(), c.to_string())).collect(),
            })?;
            let scores: Vec<f64> = field(&reply, "scores", &self.command)?;
            if scores.len() != chunk.len() {
                return Err(Error::Adapter(format!(
                    "`{}`: sent {} pairs, got {} scores",
                    self.command,
                    chunk.len(),
                    scores.len()
                )));
            }
            out.extend(scores);
        }
        Ok(out)
    }
}

fn field<T: serde::de::DeserializeOwned>(reply: &Value, key: &str, command: &str) -> Result<T> {
    let v = reply
        .get(key)
        .ok_or_else(|| Error::Adapter(format!("`{command}`: reply lacks `{key}`: {reply}")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Adapter(format!("`{command}`: bad `{key}`: {e}")))
}

impl Drop for AdapterProcess {
    fn drop(&mut self) {
        // Closing stdin ends the serve loop.
        self.stdin.take();
        if self.child.try_wait().ok().flatten().is_none() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

/// Model side of the protocol.
pub trait AdapterBackend {
    fn info(&self) -> AdapterInfo;

    fn embed(&mut self, _texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, String> {
        Err("embed is not supported by this adapter".into())
    }

    fn score(&mut self, _pairs: &[(String, String)]) -> std::result::Result<Vec<f64>, String> {
        Err("score is not supported by this adapter".into())
    }
}

/// Answers requests from `input` until it closes. Malformed requests and
/// backend failures produce an `{"error": ...}` line and the loop continues.
pub fn serve<B: AdapterBackend, R: BufRead, W: Write>(backend: &mut B, input: R, output: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(output);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Err(e) => json!({ "error": format!("malformed request: {e}") }),
            Ok(Request::Info) => serde_json::to_value(backend.info()).expect("info serializes"),
            Ok(Request::Embed { texts }) if texts.len() > BATCH_LIMIT => over_limit(texts.len()),
            Ok(Request::Score { pairs }) if pairs.len() > BATCH_LIMIT => over_limit(pairs.len()),
            Ok(Request::Embed { texts }) => match backend.embed(&texts) {
                Ok(vectors) => json!({ "vectors": vectors }),
                Err(e) => json!({ "error": e }),
            },
            Ok(Request::Score { pairs }) => match backend.score(&pairs) {
                Ok(scores) => json!({ "scores": scores }),
                Err(e) => json!({ "error": e }),
            },
        };
        serde_json::to_writer(&mut out, &reply)?;
        out.write_all(b"\n")?;
        out.flush()?;
    }
    Ok(())
}

fn over_limit(n: usize) -> Value {
    json!({ "error": format!("batch of {n} exceeds the limit of {BATCH_LIMIT}") })
}

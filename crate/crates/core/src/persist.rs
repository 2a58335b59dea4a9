//! Versioned on-disk container for built artifacts.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TOSS1" | u32 config_len | config (JSON) | u64 payload_len | payload (JSON)
//! ```
//!
//! The preprocessing config travels with every artifact so a query can never
//! be matched against an index built under different preprocessing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::textprep::PrepConfig;

pub const MAGIC: &[u8; 5] = b"TOSS1";

pub fn write_artifact<W: Write, T: Serialize>(mut w: W, prep: PrepConfig, payload: &T) -> Result<()> {
    let config = serde_json::to_vec(&prep).map_err(|e| Error::Corrupt(e.to_string()))?;
    let body = serde_json::to_vec(payload).map_err(|e| Error::Corrupt(e.to_string()))?;
    let io = |e| Error::io("<artifact>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(config.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&config).map_err(io)?;
    w.write_all(&(body.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&body).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_artifact<R: Read, T: DeserializeOwned>(mut r: R) -> Result<(PrepConfig, T)> {
    let io = |e| Error::io("<artifact>", e);
    let mut magic = [0u8; 5];
    let got = read_up_to(&mut r, &mut magic).map_err(io)?;
    if &magic[..got] != MAGIC {
        return Err(Error::Version {
            found: String::from_utf8_lossy(&magic[..got]).into_owned(),
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
        });
    }
    let mut len4 = [0u8; 4];
    r.read_exact(&mut len4).map_err(truncated)?;
    let mut config = vec![0u8; u32::from_le_bytes(len4) as usize];
    r.read_exact(&mut config).map_err(truncated)?;
    let prep: PrepConfig =
        serde_json::from_slice(&config).map_err(|e| Error::Corrupt(format!("config: {e}")))?;
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8).map_err(truncated)?;
    let len = u64::from_le_bytes(len8);
    let mut body = Vec::new();
    r.take(len).read_to_end(&mut body).map_err(io)?;
    if body.len() as u64 != len {
        return Err(Error::Corrupt("payload truncated".into()));
    }
    let payload = serde_json::from_slice(&body).map_err(|e| Error::Corrupt(format!("payload: {e}")))?;
    Ok((prep, payload))
}

fn truncated(_: std::io::Error) -> Error {
    Error::Corrupt("header truncated".into())
}

fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

/// Writes `payload` to `path` under the current container version.
pub fn save_artifact<T: Serialize>(path: impl AsRef<Path>, prep: PrepConfig, payload: &T) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_artifact(BufWriter::new(file), prep, payload).map_err(|e| with_path(e, path))
}

/// Reads an artifact and the preprocessing config it was built with.
pub fn load_artifact<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(PrepConfig, T)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let out = read_artifact(&mut reader).map_err(|e| with_path(e, path))?;
    // a whole file is one artifact, so anything after the payload is damage
    let mut extra = [0u8; 1];
    if reader.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Corrupt(format!("{}: trailing bytes after payload", path.display())));
    }
    Ok(out)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// Fails unless a query-time config matches the build-time one.
pub fn check_prep(built: PrepConfig, requested: PrepConfig) -> Result<()> {
    if built == requested {
        Ok(())
    } else {
        Err(Error::PrepMismatch {
            built: built.to_string(),
            requested: requested.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_is_echoed_back() {
        let cfg: PrepConfig = "sps,rs".parse().unwrap();
        let mut buf = Vec::new();
        write_artifact(&mut buf, cfg, &vec![1.5f64, -0.1, 1e-300]).unwrap();
        let (back, payload): (PrepConfig, Vec<f64>) = read_artifact(&buf[..]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(payload, vec![1.5, -0.1, 1e-300]);
    }

    #[test]
    fn wrong_magic_is_a_version_error() {
        let mut buf = Vec::new();
        write_artifact(&mut buf, PrepConfig::ALL, &0u8).unwrap();
        buf[4] = b'0';
        match read_artifact::<_, u8>(&buf[..]).unwrap_err() {
            Error::Version { found, expected } => {
                assert_eq!(found, "TOSS0");
                assert_eq!(expected, "TOSS1");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn short_file_is_a_version_error() {
        assert!(matches!(
            read_artifact::<_, u8>(&b"TO"[..]).unwrap_err(),
            Error::Version { .. }
        ));
    }

    #[test]
    fn truncated_payload_is_detected() {
        let mut buf = Vec::new();
        write_artifact(&mut buf, PrepConfig::NONE, &"payload").unwrap();
        buf.truncate(buf.len() - 2);
        assert!(matches!(
            read_artifact::<_, String>(&buf[..]).unwrap_err(),
            Error::Corrupt(_)
        ));
    }

    #[test]
    fn prep_mismatch_names_both_configs() {
        let err = check_prep(PrepConfig::ALL, PrepConfig::NONE).unwrap_err();
        assert_eq!(
            err.to_string(),
            "preprocessing mismatch: artifact built with `sps,ds,rs,pos`, query uses `none`"
        );
    }
}

//! Files: JSON lines, atomic writes and content-hashed stage manifests.

use crate::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = ".stage.json";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

/// Write via a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::format(path.display().to_string(), e))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it).map_err(|e| Error::format(path.display().to_string(), e))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Read JSON lines. A truncated final line (from an interrupted append)
/// is skipped; malformed lines elsewhere are errors.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let lines: Vec<String> = BufReader::new(f)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::with_capacity(lines.len());
    for (i, l) in lines.iter().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(l) {
            Ok(v) => out.push(v),
            Err(_) if Some(i) == last => log::warn!("{}: skipping truncated last line", path.display()),
            Err(e) => return Err(Error::format(format!("{} line {}", path.display(), i + 1), e)),
        }
    }
    Ok(out)
}

/// Append-only JSON-lines sink; each record is flushed as it is written.
pub struct JsonlAppender {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlAppender {
    pub fn open(path: &Path) -> Result<JsonlAppender> {
        if let Some(dir) = path.parent() {
            ensure_dir(dir)?;
        }
        repair_tail(path)?;
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Ok(JsonlAppender { path: path.to_path_buf(), out: BufWriter::new(f) })
    }

    pub fn append<T: Serialize>(&mut self, item: &T) -> Result<()> {
        let ctx = || format!("appending to {}", self.path.display());
        serde_json::to_writer(&mut self.out, item).map_err(|e| Error::format(ctx(), e))?;
        self.out.write_all(b"\n").map_err(|e| Error::io(ctx(), e))?;
        self.out.flush().map_err(|e| Error::io(ctx(), e))
    }
}

/// Cut a partially written last line so appends start on a fresh line.
fn repair_tail(path: &Path) -> Result<()> {
    let Ok(bytes) = fs::read(path) else { return Ok(()) };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map(|i| i + 1).unwrap_or(0);
    log::warn!("{}: dropping {} bytes of a partial record", path.display(), bytes.len() - keep);
    write_atomic(path, &bytes[..keep])
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("hashing {}", path.display()), e))?;
    Ok(sha256_bytes(&bytes))
}

/// Content hashes of a stage's inputs and outputs, plus a digest of the
/// configuration that shaped it. Paths are relative to the output root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub params: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

pub fn hash_files(root: &Path, files: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    files.iter().map(|f| Ok((rel(root, f), sha256_file(f)?))).collect()
}

impl StageManifest {
    pub fn build(root: &Path, stage: &str, params: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<StageManifest> {
        Ok(StageManifest {
            stage: stage.to_string(),
            params: sha256_bytes(params.as_bytes()),
            inputs: hash_files(root, inputs)?,
            outputs: hash_files(root, outputs)?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST), self)
    }

    pub fn read(dir: &Path) -> Option<StageManifest> {
        read_json(&dir.join(MANIFEST)).ok()
    }

    /// True when every recorded file still has its recorded hash, the
    /// current inputs are exactly the recorded ones, and params match.
    pub fn is_current(&self, root: &Path, params: &str, inputs: &[PathBuf]) -> bool {
        if self.params != sha256_bytes(params.as_bytes()) {
            return false;
        }
        let Ok(now) = hash_files(root, inputs) else { return false };
        if now != self.inputs {
            return false;
        }
        self.outputs.iter().all(|(p, h)| sha256_file(&root.join(p)).map(|x| &x == h).unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_truncated_tail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        write_jsonl(&p, &[1u32, 2, 3]).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes.extend_from_slice(b"{\"partial");
        fs::write(&p, &bytes).unwrap();
        assert_eq!(read_jsonl::<u32>(&p).unwrap(), vec![1, 2, 3]);
        let mut a = JsonlAppender::open(&p).unwrap();
        a.append(&4u32).unwrap();
        drop(a);
        assert_eq!(read_jsonl::<u32>(&p).unwrap(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn manifest_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let i = root.join("in.txt");
        let o = root.join("out.txt");
        fs::write(&i, "a").unwrap();
        fs::write(&o, "b").unwrap();
        let m = StageManifest::build(root, "s", "p", &[i.clone()], &[o.clone()]).unwrap();
        assert!(m.is_current(root, "p", &[i.clone()]));
        assert!(!m.is_current(root, "q", &[i.clone()]));
        fs::write(&o, "c").unwrap();
        assert!(!m.is_current(root, "p", &[i.clone()]));
        fs::write(&o, "b").unwrap();
        fs::write(&i, "z").unwrap();
        assert!(!m.is_current(root, "p", &[i]));
    }
}

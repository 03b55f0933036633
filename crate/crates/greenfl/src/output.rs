//! File emission. Writes go to a sibling temp file first and are renamed
//! into place, so a crash never leaves a half-written artifact. Every file
//! carries the config hash and the seed it was produced under, and nothing
//! time- or host-dependent, so a rerun is byte-identical.

use serde::Serialize;
use std::path::Path;

use crate::error::{Error, Result};

/// Provenance stamp embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub config_sha256: String,
    pub seed: u64,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn encode_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".{}.tmp", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// CSV with a single leading `# key=value ...` provenance line; readers
/// should skip lines starting with `#`.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], meta: &Meta) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row).map_err(|e| encode_err(path, e))?;
    }
    let body = wtr.into_inner().map_err(|e| encode_err(path, e))?;
    let mut out = format!(
        "# config_sha256={} seed={}\n",
        meta.config_sha256, meta.seed
    )
    .into_bytes();
    out.extend_from_slice(&body);
    write_atomic(path, &out)
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    meta: &'a Meta,
    data: &'a T,
}

/// Pretty JSON `{meta, data}`; key order follows struct declaration order,
/// so it is stable across runs.
pub fn write_json<T: Serialize>(path: &Path, data: &T, meta: &Meta) -> Result<()> {
    let doc = Document { meta, data };
    let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| encode_err(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

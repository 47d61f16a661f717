//! Artifact persistence: line-delimited JSON with a provenance header, CSV with a
//! `#` comment header, and content hashing.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot access '{path}': {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("'{path}' line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("'{path}' has no provenance header")]
    MissingHeader { path: PathBuf },
    #[error("csv error in '{path}': {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl ArtifactError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ArtifactError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Provenance stamped as the first line of every line-delimited artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    /// Artifact kind, e.g. `"corpus"` or `"probes"`.
    pub kind: String,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    #[serde(rename = "_artifact")]
    artifact: ArtifactHeader,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, ArtifactError> {
    let bytes = fs::read(path).map_err(|e| ArtifactError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn ensure_parent(path: &Path) -> Result<(), ArtifactError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| ArtifactError::io(parent, e))?;
        }
    }
    Ok(())
}

/// Writes `header` followed by one JSON object per record.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    header: &ArtifactHeader,
    records: impl IntoIterator<Item = T>,
) -> Result<(), ArtifactError> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| ArtifactError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let to_io = |e: serde_json::Error| ArtifactError::io(path, e.into());
    serde_json::to_writer(
        &mut out,
        &HeaderLine {
            artifact: header.clone(),
        },
    )
    .map_err(to_io)?;
    out.write_all(b"\n").map_err(|e| ArtifactError::io(path, e))?;
    for record in records {
        serde_json::to_writer(&mut out, &record).map_err(to_io)?;
        out.write_all(b"\n").map_err(|e| ArtifactError::io(path, e))?;
    }
    out.flush().map_err(|e| ArtifactError::io(path, e))
}

/// Reads a file written by [`write_jsonl`]. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
) -> Result<(ArtifactHeader, Vec<T>), ArtifactError> {
    let file = File::open(path).map_err(|e| ArtifactError::io(path, e))?;
    let mut header = None;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ArtifactError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |e: serde_json::Error| ArtifactError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        };
        if header.is_none() {
            let h: HeaderLine = serde_json::from_str(&line).map_err(|_| {
                ArtifactError::MissingHeader {
                    path: path.to_path_buf(),
                }
            })?;
            header = Some(h.artifact);
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(malformed)?);
    }
    let header = header.ok_or_else(|| ArtifactError::MissingHeader {
        path: path.to_path_buf(),
    })?;
    Ok((header, records))
}

/// Writes a JSON document with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    ensure_parent(path)?;
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| ArtifactError::io(path, e.into()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let bytes = fs::read(path).map_err(|e| ArtifactError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| ArtifactError::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Write-then-rename so a crash never leaves a half-written file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    ensure_parent(path)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| ArtifactError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ArtifactError::io(path, e))
}

/// CSV text preceded by a `# config_hash=<hash>` comment line.
pub fn csv_with_header(config_hash: &str, rows: &[Vec<String>]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.write_record(row).expect("in-memory csv write");
    }
    let body = String::from_utf8(writer.into_inner().expect("in-memory csv flush"))
        .expect("csv of utf-8 fields");
    format!("# config_hash={config_hash}\n{body}")
}

/// Returns the `config_hash` stamped in a CSV comment header, if any.
pub fn csv_config_hash(text: &str) -> Option<String> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix("config_hash="))
        .map(str::to_owned)
}

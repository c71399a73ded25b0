//! Run manifests: what was run, on which inputs, and what it wrote.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pcl_core::io::{read_bytes, read_json, to_json_bytes, write_atomic};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> pcl_core::Result<Self> {
        let data = read_bytes(path)?;
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(&data),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// SHA-256 over the resolved command and the digests of its inputs.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub argv: Vec<String>,
    pub command: Command,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub fn now_unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn config_hash(command: &Command, inputs: &[FileDigest]) -> pcl_core::Result<String> {
    #[derive(Serialize)]
    struct Hashed<'a> {
        command: &'a Command,
        inputs: &'a [FileDigest],
    }
    let bytes = serde_json::to_vec(&Hashed { command, inputs })
        .map_err(|e| pcl_core::Error::InvalidInput(format!("cannot serialize command: {e}")))?;
    Ok(sha256_hex(&bytes))
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output.as_os_str().to_owned();
    name.push(MANIFEST_SUFFIX);
    PathBuf::from(name)
}

pub fn write_manifest(path: &Path, m: &RunManifest) -> pcl_core::Result<()> {
    write_atomic(path, &to_json_bytes(m)?)
}

pub fn read_manifest(path: &Path) -> pcl_core::Result<RunManifest> {
    read_json(path)
}

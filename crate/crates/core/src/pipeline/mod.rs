//! File-based pipeline stages with layered configuration and run manifests.
//!
//! Every stage reads its inputs from disk, writes its outputs, and leaves a
//! `<stem>.manifest.json` beside its primary output recording the effective
//! configuration, the root seed and SHA-256 hashes of every input and output
//! (plus the hash of each input's own manifest when one exists). Wall-clock
//! timings go to `<stem>.timings.json` so that manifests of identical runs
//! are byte-identical.

mod config;
mod stages;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jsonl;

pub use config::{CleanConfig, EvalConfig, RunConfig, VocabConfig};
pub use stages::{
    align, annotate, clean, eval_mask_report, eval_mrr, eval_ppl, eval_probe, load_annotations, mask, synth,
    train, triplets, AnnotateInputs, CleanInputs, MrrReport, PplReport, ProbeReport, StageOutcome,
};

/// `dir/stem.suffix` for `dir/stem.ext`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn manifest_path(output: &Path) -> PathBuf {
    sibling(output, "manifest.json")
}

pub fn timings_path(output: &Path) -> PathBuf {
    sibling(output, "timings.json")
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    pub name: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_sha256: Option<String>,
}

impl FileRecord {
    pub fn input(role: &str, path: &Path) -> Result<Self> {
        let m = manifest_path(path);
        let manifest_sha256 = if m.is_file() && m != path { Some(sha256_file(&m)?) } else { None };
        Ok(Self {
            role: role.to_string(),
            name: file_name(path),
            sha256: sha256_file(path)?,
            manifest_sha256,
        })
    }

    pub fn output(role: &str, path: &Path) -> Result<Self> {
        Ok(Self {
            role: role.to_string(),
            name: file_name(path),
            sha256: sha256_file(path)?,
            manifest_sha256: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        jsonl::read_json(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stage: String,
    pub seconds: f64,
    pub threads: usize,
}

/// Run `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

//! Run manifests: what was run, on which inputs, producing which files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunConfig;
use crate::error::{Error, Result};

/// Version of the on-disk CSV/PLY/manifest layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_bytes(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let data = std::fs::read(path)?;
    Ok(FileDigest {
        path: path.to_string_lossy().into_owned(),
        sha256: digest_bytes(&data),
        bytes: data.len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub format_version: u32,
    pub command: String,
    pub status: String,
    pub seed: u64,
    /// Configuration as run, without the output directory.
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    /// Output files relative to the output directory, sorted by path.
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        let mut config = config.clone();
        config.run.out = None;
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            status: "ok".to_string(),
            seed: config.permutation.seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))
    }

    /// Inputs whose current content no longer matches the recorded digest.
    pub fn changed_inputs(&self) -> Result<Vec<String>> {
        let mut changed = Vec::new();
        for input in &self.inputs {
            let now = digest_file(Path::new(&input.path))?;
            if now.sha256 != input.sha256 {
                changed.push(input.path.clone());
            }
        }
        Ok(changed)
    }
}

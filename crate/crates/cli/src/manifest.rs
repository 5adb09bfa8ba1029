//! Run manifests. Every output file carries the hash of the manifest that
//! produced it; the timestamp is left out of the hash so identical runs
//! share a hash.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    /// Conditions worth a second look, such as non-converged fits.
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config_path: None,
            parameters,
            seed: None,
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            flags: Vec::new(),
            timestamp: None,
        }
    }

    /// Hex SHA-256 of the manifest serialized without its timestamp.
    pub fn hash(&self) -> String {
        let mut stripped = self.clone();
        stripped.timestamp = None;
        let bytes = serde_json::to_vec(&stripped).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Writes the manifest, stamped with the current time and its hash.
    pub fn write(&self, path: &Path) -> std::io::Result<String> {
        let hash = self.hash();
        let mut stamped = self.clone();
        stamped.timestamp = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
        let doc = serde_json::json!({ "hash": hash, "manifest": stamped });
        std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(hash)
    }
}

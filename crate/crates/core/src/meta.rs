//! Reproducibility metadata stamped into every file the pipeline writes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub template_version: String,
}

impl RunMeta {
    /// `config` is any serializable view of the settings that influenced the output.
    pub fn new<T: Serialize>(config: &T, seed: u64) -> Self {
        RunMeta {
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: config_hash(config),
            seed,
            template_version: crate::promptkit::TEMPLATE_VERSION.to_owned(),
        }
    }

    /// Single-line form used as a `#` comment on delimited tables.
    pub fn comment_line(&self) -> String {
        format!(
            "# tool_version={} config_hash={} seed={} template_version={}",
            self.tool_version, self.config_hash, self.seed, self.template_version
        )
    }
}

/// SHA-256 (hex, first 16 chars) of the canonical JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&json);
    hex::encode(digest)[..16].to_owned()
}

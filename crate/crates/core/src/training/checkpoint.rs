use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::trainer::Trainer;
use crate::error::{Error, Result};
use crate::model::{to_hex, CompositionalModel};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// SHA-256 of the canonical JSON form of a serializable value.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(to_hex(&Sha256::digest(&json)))
}

/// JSON tensor dump of the model and optimizer, tagged with the hash of the
/// configuration that produced it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub model: CompositionalModel,
    pub trainer: Trainer,
}

impl Checkpoint {
    pub fn new(config_hash: String, model: CompositionalModel, trainer: Trainer) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_hash,
            model,
            trainer,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Unsupported(format!(
                "checkpoint format {} (expected {CHECKPOINT_FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}

//! Versioned JSON checkpoints of trained agents.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::{AgentParams, PpoConfig};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("decode: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("unsupported checkpoint format {0}")]
    Format(u32),
    #[error("config digest mismatch: checkpoint {found}, expected {expected}")]
    ConfigMismatch { found: String, expected: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub config_digest: String,
    pub config: PpoConfig,
    pub agents: Vec<AgentParams>,
}

impl Checkpoint {
    pub fn new(config: &PpoConfig, agents: Vec<AgentParams>) -> Self {
        Checkpoint { format: CHECKPOINT_FORMAT, config_digest: config.digest(), config: config.clone(), agents }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let ck: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(ck.format));
        }
        let expected = ck.config.digest();
        if ck.config_digest != expected {
            return Err(CheckpointError::ConfigMismatch { found: ck.config_digest, expected });
        }
        Ok(ck)
    }
}

//! Versioned checkpoint files: the model config plus every named parameter
//! tensor, as JSON. f64 values serialize as shortest-roundtrip decimals, so
//! load(save(p)) reproduces every bit.

use super::params::ModelParams;
use super::{ModelConfig, ModelError};
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0} (expected {CHECKPOINT_VERSION})")]
    Version(u32),
    #[error("checkpoint missing tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint has unknown tensor {0}")]
    UnknownTensor(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Trained model: configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ModelParams) -> Checkpoint {
        Checkpoint { config, params }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let tensors: BTreeMap<String, Tensor> = self
            .params
            .named()
            .into_iter()
            .map(|(name, t)| (name, t.clone()))
            .collect();
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            config: self.config,
            tensors,
        };
        let mut bytes = serde_json::to_vec(&file)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let file: CheckpointFile = serde_json::from_slice(bytes)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(file.version));
        }
        let mut tensors = file.tensors;
        let template = ModelParams::zeros(&file.config);
        let mut flat = Vec::new();
        for (name, _) in template.named() {
            let t = tensors
                .remove(&name)
                .ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
            flat.push(t);
        }
        if let Some((name, _)) = tensors.into_iter().next() {
            return Err(CheckpointError::UnknownTensor(name));
        }
        let params = ModelParams::from_flat(flat);
        params.validate_shapes(&file.config)?;
        Ok(Checkpoint {
            config: file.config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

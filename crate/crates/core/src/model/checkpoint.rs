use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{DpmError, Result};
use crate::training::{TrainConfig, TrainState};

pub const CHECKPOINT_FORMAT: &str = "dpm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Every parameter tensor by name, plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub train_config: TrainConfig,
    pub tensors: Vec<NamedTensor>,
    /// Optimizer and epoch counters for resuming; absent in final checkpoints.
    #[serde(default)]
    pub state: Option<TrainState>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, train_config: &TrainConfig) -> Self {
        let tensors = params
            .tensors()
            .into_iter()
            .map(|t| NamedTensor {
                name: t.name,
                shape: t.shape,
                data: t.data.to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model: params.config.clone(),
            train_config: train_config.clone(),
            tensors,
            state: None,
        }
    }

    /// Fails with a checkpoint error naming the first field that differs.
    pub fn validate_against(&self, expected: &ModelConfig) -> Result<()> {
        let m = &self.model;
        let mismatch = |what: &str, want: String, got: String| {
            Err(DpmError::Checkpoint(format!(
                "{what}: expected {want}, checkpoint has {got}"
            )))
        };
        if m.input_dim != expected.input_dim {
            return mismatch("input_dim", expected.input_dim.to_string(), m.input_dim.to_string());
        }
        if m.embed_dim != expected.embed_dim {
            return mismatch("embed_dim", expected.embed_dim.to_string(), m.embed_dim.to_string());
        }
        if m.hidden != expected.hidden {
            return mismatch("hidden", format!("{:?}", expected.hidden), format!("{:?}", m.hidden));
        }
        if m.dq_hidden != expected.dq_hidden {
            return mismatch(
                "dq_hidden",
                format!("{:?}", expected.dq_hidden),
                format!("{:?}", m.dq_hidden),
            );
        }
        if m.categories != expected.categories {
            return mismatch(
                "categories",
                format!("{:?}", expected.categories),
                format!("{:?}", m.categories),
            );
        }
        Ok(())
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(DpmError::Checkpoint(format!(
                "unsupported container {} v{}",
                self.format, self.version
            )));
        }
        let mut params = ModelParams::init(self.model.clone(), 0)?;
        let mut slots = params.tensors_mut();
        if slots.len() != self.tensors.len() {
            return Err(DpmError::Checkpoint(format!(
                "expected {} tensors, found {}",
                slots.len(),
                self.tensors.len()
            )));
        }
        for (slot, stored) in slots.iter_mut().zip(&self.tensors) {
            if slot.name != stored.name {
                return Err(DpmError::Checkpoint(format!(
                    "expected tensor {}, found {}",
                    slot.name, stored.name
                )));
            }
            if slot.shape != stored.shape || stored.data.len() != slot.data.len() {
                return Err(DpmError::Checkpoint(format!(
                    "tensor {}: expected shape {:?}, found {:?} with {} values",
                    slot.name,
                    slot.shape,
                    stored.shape,
                    stored.data.len()
                )));
            }
            slot.data.copy_from_slice(&stored.data);
        }
        drop(slots);
        if !params.is_finite() {
            return Err(DpmError::Checkpoint("non-finite parameter values".into()));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

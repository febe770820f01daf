//! JSON checkpoint container: config, named row-major `f64` tensors, training
//! seed and metrics history.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::DiscriminatorModel;
use super::train::EpochMetrics;
use super::DiscriminatorConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "roadsearch-discriminator";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: DiscriminatorConfig,
    pub training_seed: u64,
    pub pos_weight: Option<f64>,
    pub best_epoch: Option<usize>,
    pub metrics: Vec<EpochMetrics>,
    pub tensors: Vec<StoredTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &DiscriminatorModel, metrics: Vec<EpochMetrics>, pos_weight: Option<f64>, best_epoch: Option<usize>) -> Self {
        let tensors = model
            .layout
            .tensors
            .iter()
            .map(|t| StoredTensor { name: t.name.clone(), shape: t.shape.clone(), data: model.params[t.range()].to_vec() })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            training_seed: model.config.seed,
            pos_weight,
            best_epoch,
            metrics,
            tensors,
        }
    }

    pub fn to_model(&self) -> Result<DiscriminatorModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let mut model = DiscriminatorModel::zeros(self.config.clone())?;
        if self.tensors.len() != model.layout.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.layout.tensors.len(),
                self.tensors.len()
            )));
        }
        for (spec, stored) in model.layout.tensors.clone().iter().zip(&self.tensors) {
            if spec.name != stored.name || spec.shape != stored.shape || stored.data.len() != spec.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    stored.name, stored.shape, spec.name, spec.shape
                )));
            }
            if stored.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("tensor {} holds non-finite values", stored.name)));
            }
            model.params[spec.range()].copy_from_slice(&stored.data);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

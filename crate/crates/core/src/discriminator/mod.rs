//! Per-point out-of-bound predictor and the two GA fitness functions.
//!
//! F1 is the summed per-point OOB probability from a causal transformer; F2 is
//! the median curvature-space distance of a road to the rest of its pool.

mod checkpoint;
mod linalg;
mod model;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, StoredTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use model::{sigmoid, DiscriminatorModel, Layout, TensorSpec, CURVATURE_SCALE};
pub use train::{
    classification_rates, gradient_check, gradient_check_batch, loss, pos_weight, split_dataset, train, weighted_bce, EpochMetrics,
    GradientCheck, TrainingReport, MAX_POS_WEIGHT, train_with,
};

use crate::error::{Error, Result};
use crate::evolution::{median, Scorer};
use crate::geometry::{curvature_distance, RoadGenome};

/// Per-point inputs: scaled curvature and arc-length increment.
pub const INPUT_FEATURES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub block_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds initialization, shuffling and dropout.
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_layers: 6,
            n_heads: 8,
            block_size: crate::geometry::DEFAULT_BLOCK_SIZE,
            dropout: 0.2,
            learning_rate: 3e-4,
            batch_size: 256,
            epochs: 500,
            seed: 0,
        }
    }
}

impl DiscriminatorConfig {
    /// Six heads need a model width divisible by six.
    pub fn six_heads() -> Self {
        Self { d_model: 132, n_heads: 6, batch_size: 1024, ..Self::default() }
    }

    /// Small model that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        Self { d_model: 32, n_layers: 2, n_heads: 4, batch_size: 32, learning_rate: 1e-3, epochs: 60, ..Self::default() }
    }

    pub fn check(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "discriminator.d_model ({}) must be a positive multiple of n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.block_size == 0 {
            return Err(Error::Config("discriminator.block_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("discriminator.dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("discriminator.learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("discriminator.batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-point OOB probabilities of one road and their sum (F1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub p: Vec<f64>,
    pub f1: f64,
}

impl Scores {
    fn from_logits(logits: &[f64]) -> Self {
        let p: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let f1 = p.iter().sum();
        Self { p, f1 }
    }
}

impl DiscriminatorModel {
    /// Inference on one road; dropout is disabled.
    pub fn forward(&self, genome: &RoadGenome) -> Result<Scores> {
        let logits = self.logits(&[genome])?;
        Ok(Scores::from_logits(&logits[0]))
    }

    pub fn forward_batch(&self, genomes: &[RoadGenome]) -> Result<Vec<Scores>> {
        let refs: Vec<&RoadGenome> = genomes.iter().collect();
        Ok(self.logits(&refs)?.iter().map(|l| Scores::from_logits(l)).collect())
    }
}

impl Scorer for DiscriminatorModel {
    fn f1(&self, genomes: &[RoadGenome]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(genomes)?.into_iter().map(|s| s.f1).collect())
    }
}

/// Median distance from `genome` to every other road in `pool`.
///
/// When `genome` is itself an element of `pool` (the same object, not merely an
/// equal value) that element is skipped; equal copies still count at distance 0.
pub fn diversity_f2(genome: &RoadGenome, pool: &[RoadGenome]) -> Result<f64> {
    let mut distances = Vec::with_capacity(pool.len());
    for other in pool.iter().filter(|o| !std::ptr::eq(*o, genome)) {
        if other.len() != genome.len() {
            return Err(Error::LengthMismatch { expected: genome.len(), actual: other.len() });
        }
        distances.push(curvature_distance(genome.curvatures(), other.curvatures()));
    }
    median(distances).ok_or(Error::EmptyPool)
}

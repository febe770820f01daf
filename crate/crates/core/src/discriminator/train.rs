//! Weighted per-point BCE, Adam training with best-checkpoint selection, and
//! a finite-difference gradient check.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{sigmoid, DiscriminatorModel};
use super::DiscriminatorConfig;
use crate::error::{Error, Result};
use crate::geometry::RoadGenome;
use crate::simulator::LabeledRoad;

/// Upper bound on the positive-class weight.
pub const MAX_POS_WEIGHT: f64 = 20.0;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Loss of one point given its logit: `-w·y·ln p - (1-y)·ln(1-p)`.
pub fn weighted_bce(logit: f64, label: bool, pos_weight: f64) -> f64 {
    if label {
        pos_weight * softplus(-logit)
    } else {
        softplus(logit)
    }
}

fn weighted_bce_grad(logit: f64, label: bool, pos_weight: f64) -> f64 {
    let p = sigmoid(logit);
    if label {
        pos_weight * (p - 1.0)
    } else {
        p
    }
}

/// `min(20, n_neg / n_pos)` over every point of the training set.
pub fn pos_weight(dataset: &[LabeledRoad]) -> Result<f64> {
    let positives: usize = dataset.iter().map(LabeledRoad::positives).sum();
    let total: usize = dataset.iter().map(|r| r.labels.len()).sum();
    if positives == 0 {
        return Err(Error::Config("training set contains no out-of-bound labels".into()));
    }
    Ok(MAX_POS_WEIGHT.min((total - positives) as f64 / positives as f64))
}

/// Mean per-point weighted BCE with dropout disabled.
pub fn loss(model: &DiscriminatorModel, batch: &[LabeledRoad], pos_weight: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let genomes: Vec<&RoadGenome> = batch.iter().map(|r| &r.genome).collect();
    let logits = model.logits(&genomes)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (road, row) in batch.iter().zip(&logits) {
        for (&z, &y) in row.iter().zip(&road.labels) {
            total += weighted_bce(z, y, pos_weight);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean loss over the batch and its gradient with respect to every parameter.
fn loss_and_grad(
    model: &DiscriminatorModel,
    batch: &[&LabeledRoad],
    pos_weight: f64,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<f64>)> {
    let genomes: Vec<&RoadGenome> = batch.iter().map(|r| &r.genome).collect();
    let points: usize = batch.iter().map(|r| r.labels.len()).sum();
    let inv = 1.0 / points as f64;
    let mut grad = vec![0.0; model.parameter_count()];
    let total = model.accumulate_gradient(&genomes, dropout_rng, &mut grad, |z, s, t| {
        let y = batch[s].labels[t];
        (weighted_bce(z, y, pos_weight) * inv, weighted_bce_grad(z, y, pos_weight) * inv)
    })?;
    Ok((total, grad))
}

/// Per-point sensitivity and specificity with `p >= 0.5` as positive. An
/// empty class yields 0 for its rate.
pub fn classification_rates(model: &DiscriminatorModel, data: &[LabeledRoad]) -> Result<(f64, f64)> {
    let genomes: Vec<&RoadGenome> = data.iter().map(|r| &r.genome).collect();
    let logits = model.logits(&genomes)?;
    let (mut tp, mut fneg, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (road, row) in data.iter().zip(&logits) {
        for (&z, &y) in row.iter().zip(&road.labels) {
            match (y, sigmoid(z) >= 0.5) {
                (true, true) => tp += 1,
                (true, false) => fneg += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
            }
        }
    }
    let rate = |hit: usize, miss: usize| if hit + miss == 0 { 0.0 } else { hit as f64 / (hit + miss) as f64 };
    Ok((rate(tp, fneg), rate(tn, fp)))
}

/// Seeded split by road; `val_fraction` of the roads (at least one) go to
/// validation.
pub fn split_dataset(data: &[LabeledRoad], val_fraction: f64, seed: u64) -> Result<(Vec<LabeledRoad>, Vec<LabeledRoad>)> {
    if data.len() < 2 {
        return Err(Error::Config("need at least two roads to split".into()));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config(format!("validation fraction {val_fraction} must lie in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((data.len() as f64 * val_fraction).round() as usize).clamp(1, data.len() - 1);
    let val = order[..n_val].iter().map(|&i| data[i].clone()).collect();
    let train = order[n_val..].iter().map(|&i| data[i].clone()).collect();
    Ok((train, val))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub history: Vec<EpochMetrics>,
    /// Index into `history` of the checkpoint with the best sensitivity + specificity.
    pub best_epoch: usize,
    pub best: DiscriminatorModel,
    pub pos_weight: f64,
}

impl TrainingReport {
    pub fn best_metrics(&self) -> &EpochMetrics {
        &self.history[self.best_epoch]
    }
}

struct Adam {
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(lr: f64, len: usize) -> Self {
        Self { lr, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Trains `model` in place with the hyperparameters in `model.config`.
pub fn train(model: &mut DiscriminatorModel, train_set: &[LabeledRoad], val_set: &[LabeledRoad]) -> Result<TrainingReport> {
    train_with(model, train_set, val_set, |_| {})
}

/// As [`train`], reporting each epoch's metrics as they are produced.
pub fn train_with(
    model: &mut DiscriminatorModel,
    train_set: &[LabeledRoad],
    val_set: &[LabeledRoad],
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainingReport> {
    model.config.check()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let pw = pos_weight(train_set)?;
    let cfg: DiscriminatorConfig = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a1e);
    let mut adam = Adam::new(cfg.learning_rate, model.parameter_count());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, DiscriminatorModel)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut points = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&LabeledRoad> = chunk.iter().map(|&i| &train_set[i]).collect();
            let n: usize = batch.iter().map(|r| r.labels.len()).sum();
            let (loss, grad) = loss_and_grad(model, &batch, pw, Some(&mut rng))?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, step, loss });
            }
            adam.update(&mut model.params, &grad);
            if model.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged { epoch, step, loss });
            }
            epoch_loss += loss * n as f64;
            points += n;
        }
        let (sensitivity, specificity) = classification_rates(model, val_set)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: epoch_loss / points as f64,
            val_loss: loss(model, val_set, pw)?,
            sensitivity,
            specificity,
        };
        on_epoch(&metrics);
        let score = sensitivity + specificity;
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.clone()));
        }
        history.push(metrics);
    }
    let (best_epoch, best) = match best {
        Some((_, e, m)) => (e, m),
        None => return Err(Error::Config("discriminator.epochs must be positive".into())),
    };
    Ok(TrainingReport { history, best_epoch, best, pos_weight: pw })
}

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Name of the tensor holding the worst parameter.
    pub worst_tensor: String,
    pub parameters: usize,
}

const FD_STEP: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

/// Gradient check on a tiny random model and batch, dropout off. Returns the
/// worst `|a - n| / max(|a|, |n|, 1e-6)` over all parameters.
pub fn gradient_check(seed: u64) -> Result<GradientCheck> {
    let config = DiscriminatorConfig {
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        block_size: 5,
        dropout: 0.0,
        ..DiscriminatorConfig::default()
    };
    let model = DiscriminatorModel::random(config, seed, 0.3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let batch: Vec<LabeledRoad> = (0..3)
        .map(|i| {
            let c = (0..5).map(|_| rng.random_range(-0.1..0.1)).collect();
            let mut labels: Vec<bool> = (0..5).map(|_| rng.random_bool(0.3)).collect();
            labels[i] = true;
            LabeledRoad { genome: RoadGenome::from_curvatures(c, 1.0).expect("finite"), labels }
        })
        .collect();
    gradient_check_batch(&model, &batch, 3.0, |_| true)
}

/// Gradient check of `model` on `batch`, restricted to tensors accepted by `select`.
pub fn gradient_check_batch(
    model: &DiscriminatorModel,
    batch: &[LabeledRoad],
    pos_weight: f64,
    select: impl Fn(&str) -> bool,
) -> Result<GradientCheck> {
    let refs: Vec<&LabeledRoad> = batch.iter().collect();
    let (_, analytic) = loss_and_grad(model, &refs, pos_weight, None)?;
    let mut probe = model.clone();
    let mut worst = (0.0f64, String::new());
    let mut parameters = 0;
    for spec in &model.layout.tensors {
        if !select(&spec.name) {
            continue;
        }
        for i in spec.range() {
            let original = probe.params[i];
            probe.params[i] = original + FD_STEP;
            let plus = loss(&probe, batch, pos_weight)?;
            probe.params[i] = original - FD_STEP;
            let minus = loss(&probe, batch, pos_weight)?;
            probe.params[i] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel > worst.0 {
                worst = (rel, spec.name.clone());
            }
            parameters += 1;
        }
    }
    Ok(GradientCheck { max_relative_error: worst.0, worst_tensor: worst.1, parameters })
}

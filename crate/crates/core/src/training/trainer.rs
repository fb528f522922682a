use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig};
use crate::data::{DatasetManifest, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::model::{CompositionalModel, LossTerms};
use crate::params::Params;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adamw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Multiply cosine scores by the logit scale before the losses.
    pub apply_logit_scale: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 0.01,
            seed: 0,
            optimizer: OptimizerKind::Adamw,
            apply_logit_scale: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("training.batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("training.lr must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig("training.weight_decay must be non-negative".into()));
        }
        Ok(())
    }

    pub fn optimizer_config(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss_a: f64,
    pub loss_o: f64,
    pub loss_total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss_a: f64,
    pub mean_loss_o: f64,
    pub mean_loss_total: f64,
}

/// Optimizer state plus progress counters; everything needed to resume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub config: TrainConfig,
    pub optimizer: AdamW,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
}

/// Batch order for an epoch; depends only on the seed and epoch index.
pub fn epoch_order(num_samples: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut order: Vec<usize> = (0..num_samples).collect();
    order.shuffle(&mut rng);
    order
}

impl Trainer {
    pub fn new(config: TrainConfig, model: &CompositionalModel) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamW::new(config.optimizer_config(), model.params.num_params());
        Ok(Self {
            config,
            optimizer,
            epoch: 0,
            step: 0,
        })
    }

    pub fn logit_scale(&self, model: &CompositionalModel) -> f64 {
        if self.config.apply_logit_scale {
            model.logit_scale()
        } else {
            1.0
        }
    }

    /// One optimizer step on a batch. Returns the losses before the update.
    pub fn step_batch(&mut self, model: &mut CompositionalModel, batch: &[&SampleRecord]) -> Result<StepRecord> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("empty batch".into()));
        }
        let tau = self.logit_scale(model);
        let out = model.loss_and_grad(batch, tau, LossTerms::ALL).map_err(|e| match e {
            Error::NumericFailure(msg) => Error::NumericFailure(format!(
                "epoch {} step {}: {msg}; batch starts at sample {}",
                self.epoch,
                self.step,
                batch[0].id
            )),
            other => other,
        })?;
        self.optimizer.update(&mut model.params, &out.grads)?;
        self.step += 1;
        Ok(StepRecord {
            epoch: self.epoch,
            step: self.step,
            loss_a: out.losses.attr,
            loss_o: out.losses.obj,
            loss_total: out.losses.total(),
        })
    }

    /// Runs one epoch over the shuffled train split, reporting each step.
    pub fn train_epoch(
        &mut self,
        model: &mut CompositionalModel,
        manifest: &DatasetManifest,
        log: &mut dyn FnMut(&StepRecord) -> Result<()>,
    ) -> Result<EpochSummary> {
        let train: Vec<&SampleRecord> = manifest.split(Split::Train).collect();
        if train.is_empty() {
            return Err(Error::EmptySplit(Split::Train));
        }
        let order = epoch_order(train.len(), self.config.seed, self.epoch);
        let mut sums = (0.0, 0.0, 0.0);
        let mut steps = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&SampleRecord> = chunk.iter().map(|&i| train[i]).collect();
            let record = self.step_batch(model, &batch)?;
            log(&record)?;
            sums.0 += record.loss_a;
            sums.1 += record.loss_o;
            sums.2 += record.loss_total;
            steps += 1;
        }
        let summary = EpochSummary {
            epoch: self.epoch,
            steps,
            mean_loss_a: sums.0 / steps as f64,
            mean_loss_o: sums.1 / steps as f64,
            mean_loss_total: sums.2 / steps as f64,
        };
        self.epoch += 1;
        Ok(summary)
    }

    /// Trains until `config.epochs` epochs are complete.
    pub fn fit(
        &mut self,
        model: &mut CompositionalModel,
        manifest: &DatasetManifest,
        log: &mut dyn FnMut(&StepRecord) -> Result<()>,
    ) -> Result<Vec<EpochSummary>> {
        let mut summaries = Vec::new();
        while self.epoch < self.config.epochs {
            let summary = self.train_epoch(model, manifest, log)?;
            log::info!(
                "epoch {} loss {:.4} (attr {:.4}, obj {:.4})",
                summary.epoch,
                summary.mean_loss_total,
                summary.mean_loss_a,
                summary.mean_loss_o
            );
            summaries.push(summary);
        }
        Ok(summaries)
    }
}

/// Convenience wrapper: one epoch with a fresh log sink.
pub fn train_epoch(
    model: &mut CompositionalModel,
    manifest: &DatasetManifest,
    trainer: &mut Trainer,
) -> Result<(EpochSummary, Vec<StepRecord>)> {
    let mut records = Vec::new();
    let summary = trainer.train_epoch(model, manifest, &mut |r| {
        records.push(*r);
        Ok(())
    })?;
    Ok((summary, records))
}

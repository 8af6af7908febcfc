//! Minibatch Adam on the free-energy objective.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::objective::{grad_weighted, noise_seed, Episode, FreeEnergy};
use crate::domain::FrameRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Sequences per gradient step.
    pub batch_size: usize,
    /// Recorded sequences are cut into windows of this many frames.
    pub sequence_length: usize,
    pub seed: u64,
    /// Multiplier on the KL term of the training objective; 1 is the plain
    /// free energy.
    pub kl_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 1e-4,
            batch_size: 8,
            sequence_length: 16,
            seed: 0,
            kl_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.sequence_length == 0 {
            return Err(Error::Config(
                "batch_size and sequence_length must be at least 1".into(),
            ));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(Error::Config("kl_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub free_energy: f64,
    pub kl_term: f64,
    pub recon_term: f64,
}

/// Adam moments, kept with checkpoints so training can resume bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(len: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.step as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPSILON);
        }
    }
}

/// Splits sequences into consecutive windows of at most `len` frames.
pub fn windows(dataset: &[Vec<FrameRecord>], len: usize) -> Vec<Episode<'_>> {
    dataset
        .iter()
        .flat_map(|seq| seq.chunks(len.max(1)))
        .enumerate()
        .map(|(i, frames)| Episode {
            key: i as u64,
            frames,
        })
        .collect()
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub adam: AdamState,
    pub log: Vec<EpochLog>,
}

/// Training session that can be stopped and resumed.
pub struct Trainer {
    params: ModelParams,
    config: TrainConfig,
    adam: AdamState,
    epochs_done: usize,
    log: Vec<EpochLog>,
}

impl Trainer {
    pub fn new(params: ModelParams, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(params.len());
        Ok(Self {
            params,
            config,
            adam,
            epochs_done: 0,
            log: Vec::new(),
        })
    }

    /// Continues a session whose first `epochs_done` epochs are already applied.
    pub fn resume(
        params: ModelParams,
        config: TrainConfig,
        adam: AdamState,
        epochs_done: usize,
    ) -> Result<Self> {
        config.validate()?;
        if adam.m.len() != params.len() || adam.v.len() != params.len() {
            return Err(Error::Config("optimizer state does not match parameters".into()));
        }
        Ok(Self {
            params,
            config,
            adam,
            epochs_done,
            log: Vec::new(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    /// Runs `epochs` more epochs, calling `on_epoch` after each.
    pub fn run(
        &mut self,
        dataset: &[Vec<FrameRecord>],
        epochs: usize,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<()> {
        let episodes = windows(dataset, self.config.sequence_length);
        if episodes.is_empty() {
            return Err(Error::Empty("training dataset"));
        }
        for _ in 0..epochs {
            let epoch = self.epochs_done + 1;
            let entry = self.epoch(&episodes, epoch)?;
            self.epochs_done = epoch;
            on_epoch(&entry);
            self.log.push(entry);
        }
        Ok(())
    }

    fn epoch(&mut self, episodes: &[Episode], epoch: usize) -> Result<EpochLog> {
        let epoch_seed = noise_seed(self.config.seed, epoch as u64);
        let mut order: Vec<usize> = (0..episodes.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(epoch_seed, u64::MAX));
        order.shuffle(&mut rng);

        let mut sum = FreeEnergy::default();
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<Episode> = chunk.iter().map(|&i| episodes[i]).collect();
            let grad = grad_weighted(&batch, &self.params, epoch_seed, self.config.kl_weight)?;
            if !grad.terms.total.is_finite() || grad.values.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    value: grad.terms.total,
                });
            }
            let n = batch.len() as f64;
            sum.total += grad.terms.total * n;
            sum.kl += grad.terms.kl * n;
            sum.recon += grad.terms.recon * n;
            self.adam.update(
                self.params.values_mut(),
                &grad.values,
                self.config.learning_rate,
            );
        }
        if self.params.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                value: f64::NAN,
            });
        }
        let n = episodes.len() as f64;
        Ok(EpochLog {
            epoch,
            free_energy: sum.total / n,
            kl_term: sum.kl / n,
            recon_term: sum.recon / n,
        })
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            params: self.params,
            adam: self.adam,
            log: self.log,
        }
    }
}

/// Trains `init` for `config.epochs` epochs.
pub fn train(
    dataset: &[Vec<FrameRecord>],
    init: ModelParams,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if dataset.iter().all(|s| s.is_empty()) {
        return Err(Error::Empty("training dataset"));
    }
    let mut trainer = Trainer::new(init, config.clone())?;
    trainer.run(dataset, config.epochs, |_| {})?;
    Ok(trainer.finish())
}

/// Writes the per-epoch log as CSV: `epoch,free_energy,kl_term,recon_term`.
pub fn write_log_csv<W: std::io::Write>(mut w: W, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "epoch,free_energy,kl_term,recon_term")?;
    for e in log {
        writeln!(
            w,
            "{},{:.17e},{:.17e},{:.17e}",
            e.epoch, e.free_energy, e.kl_term, e.recon_term
        )?;
    }
    Ok(())
}

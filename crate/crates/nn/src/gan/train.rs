//! Alternating discriminator/generator updates, one pair per step.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tilesynth_core::raster::DatasetManifest;
use tilesynth_core::rng::{mix64, SplitMix64};
use tilesynth_core::TileId;

use super::checkpoint::Checkpoint;
use super::config::{DiscriminatorConfig, GeneratorConfig, PatchReduction, TrainConfig};
use super::data::{load_training_pairs, TrainingPair};
use super::model::{build_discriminator, build_generator, discriminator_seed, generator_seed};
use super::GanError;
use crate::layers::Module;
use crate::loss::{bce_mean_logit, bce_with_logits, l1, patch_accuracy};
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

pub const CHECKPOINT_FILE: &str = "checkpoint.tsck";
pub const LOG_FILE: &str = "train_log.csv";
pub const LOG_HEADER: &str = "epoch,g_adv,g_l1,d_loss,d_acc_real,d_acc_fake";

/// Per-epoch means over all steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub g_adv: f64,
    pub g_l1: f64,
    pub d_loss: f64,
    pub d_acc_real: f64,
    pub d_acc_fake: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub g_adv: f64,
    pub g_l1: f64,
    pub d_loss: f64,
    pub d_acc_real: f64,
    pub d_acc_fake: f64,
}

/// Generator objective terms for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorLoss {
    pub adversarial: f64,
    pub l1: f64,
    pub total: f64,
}

/// Training state; the checkpoint is the whole of it.
#[derive(Debug, Clone)]
pub struct TrainSession {
    pub state: Checkpoint,
}

fn adversarial(reduction: PatchReduction, logits: &Tensor, label: f32) -> (f64, Tensor) {
    match reduction {
        PatchReduction::PerPatchLoss => bce_with_logits(logits, label),
        PatchReduction::MeanLogit => bce_mean_logit(logits, label),
    }
}

/// Sample order for an epoch: a seeded permutation of `0..n`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(mix64(seed ^ epoch as u64)).shuffle(&mut order);
    order
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = format!("{LOG_HEADER}\n");
    for h in history {
        let _ = writeln!(s, "{},{},{},{},{},{}", h.epoch, h.g_adv, h.g_l1, h.d_loss, h.d_acc_real, h.d_acc_fake);
    }
    s
}

impl TrainSession {
    pub fn new(generator: &GeneratorConfig, discriminator: &DiscriminatorConfig, train: &TrainConfig) -> Result<Self, GanError> {
        train.validate()?;
        if discriminator.image_channels != generator.out_channels
            || (discriminator.conditional && generator.in_channels != generator.out_channels)
        {
            return Err(GanError::Config("discriminator channels do not match the generator".into()));
        }
        let adam = AdamConfig { lr: train.lr, beta1: train.beta1, beta2: train.beta2, ..AdamConfig::default() };
        Ok(Self {
            state: Checkpoint {
                generator: build_generator(generator, generator_seed(train.seed))?,
                discriminator: build_discriminator(discriminator, discriminator_seed(train.seed))?,
                train: train.clone(),
                epoch: 0,
                history: Vec::new(),
                opt_g: Adam::new(adam)?,
                opt_d: Adam::new(adam)?,
            },
        })
    }

    pub fn from_checkpoint(state: Checkpoint) -> Self {
        Self { state }
    }

    fn adv(&self, logits: &Tensor, label: f32) -> (f64, Tensor) {
        adversarial(self.state.train.patch_reduction, logits, label)
    }

    /// Evaluates the generator objective without touching any parameter.
    pub fn generator_objective(&mut self, input: &Tensor, target: &Tensor) -> Result<GeneratorLoss, GanError> {
        let s = &mut self.state;
        let fake = s.generator.forward(input)?;
        let logits = s.discriminator.forward(&s.discriminator.pair(input, &fake)?)?;
        let (adversarial, _) = adversarial(s.train.patch_reduction, &logits, 1.0);
        let (l1, _) = l1(&fake, target)?;
        Ok(GeneratorLoss { adversarial, l1, total: adversarial + s.train.lambda_l1 * l1 })
    }

    /// One discriminator update on (real, G(x)) followed by one generator update.
    pub fn step(&mut self, input: &Tensor, target: &Tensor) -> Result<StepStats, GanError> {
        let fake = self.state.generator.forward(input)?;
        let mut stats = self.discriminator_update(input, target, &fake)?;
        let g = self.generator_update(input, target, &fake)?;
        stats.g_adv = g.adversarial;
        stats.g_l1 = g.l1;
        Ok(stats)
    }

    /// One generator update with the discriminator held fixed.
    pub fn generator_step(&mut self, input: &Tensor, target: &Tensor) -> Result<GeneratorLoss, GanError> {
        let fake = self.state.generator.forward(input)?;
        self.generator_update(input, target, &fake)
    }

    fn discriminator_update(&mut self, input: &Tensor, target: &Tensor, fake: &Tensor) -> Result<StepStats, GanError> {
        self.state.discriminator.zero_grad();
        let d = &mut self.state.discriminator;
        let real_logits = d.forward(&d.pair(input, target)?)?;
        let (loss_real, g_real) = adversarial(self.state.train.patch_reduction, &real_logits, 1.0);
        d.backward(&g_real.map(|v| 0.5 * v))?;
        let fake_logits = d.forward(&d.pair(input, fake)?)?;
        let (loss_fake, g_fake) = adversarial(self.state.train.patch_reduction, &fake_logits, 0.0);
        d.backward(&g_fake.map(|v| 0.5 * v))?;
        let d_loss = 0.5 * (loss_real + loss_fake);
        if !d_loss.is_finite() {
            return Err(GanError::NonFinite { term: "d_loss", value: d_loss, epoch: 0, step: 0, tile: None });
        }
        self.state.opt_d.step(&mut self.state.discriminator)?;
        Ok(StepStats {
            d_loss,
            d_acc_real: patch_accuracy(&real_logits, true),
            d_acc_fake: patch_accuracy(&fake_logits, false),
            ..StepStats::default()
        })
    }

    /// Expects `fake` to be the generator's most recent forward output.
    fn generator_update(&mut self, input: &Tensor, target: &Tensor, fake: &Tensor) -> Result<GeneratorLoss, GanError> {
        self.state.generator.zero_grad();
        let logits = {
            let d = &mut self.state.discriminator;
            d.forward(&d.pair(input, fake)?)?
        };
        let (adv, g_logits) = self.adv(&logits, 1.0);
        let d = &mut self.state.discriminator;
        let g_pair = d.backward(&g_logits)?;
        let g_fake = d.target_grad(&g_pair)?;
        d.zero_grad();
        let (l1_loss, g_l1) = l1(fake, target)?;
        let lambda = self.state.train.lambda_l1;
        let loss = GeneratorLoss { adversarial: adv, l1: l1_loss, total: adv + lambda * l1_loss };
        for (term, value) in [("g_adv", adv), ("g_l1", l1_loss)] {
            if !value.is_finite() {
                return Err(GanError::NonFinite { term, value, epoch: 0, step: 0, tile: None });
            }
        }
        let grad = g_fake.zip_map(&g_l1, |a, b| (a as f64 + lambda * b as f64) as f32)?;
        self.state.generator.backward(&grad)?;
        self.state.opt_g.step(&mut self.state.generator)?;
        Ok(loss)
    }

    /// Runs the next epoch over `pairs` in its seeded order.
    pub fn run_epoch(&mut self, pairs: &[TrainingPair]) -> Result<EpochStats, GanError> {
        let epoch = self.state.epoch + 1;
        let mut sum = StepStats::default();
        for (step, i) in epoch_order(self.state.train.seed, epoch, pairs.len()).into_iter().enumerate() {
            let p = &pairs[i];
            let s = self.step(&p.input, &p.target).map_err(|e| with_position(e, epoch, step + 1, p.tile))?;
            sum.g_adv += s.g_adv;
            sum.g_l1 += s.g_l1;
            sum.d_loss += s.d_loss;
            sum.d_acc_real += s.d_acc_real;
            sum.d_acc_fake += s.d_acc_fake;
        }
        let n = pairs.len().max(1) as f64;
        let stats = EpochStats {
            epoch,
            g_adv: sum.g_adv / n,
            g_l1: sum.g_l1 / n,
            d_loss: sum.d_loss / n,
            d_acc_real: sum.d_acc_real / n,
            d_acc_fake: sum.d_acc_fake / n,
        };
        self.state.epoch = epoch;
        self.state.history.push(stats);
        Ok(stats)
    }

    /// Trains until the configured epoch count, writing the checkpoint and
    /// loss log into `out_dir` every `checkpoint_every` epochs and at the end.
    pub fn run(mut self, pairs: &[TrainingPair], out_dir: Option<&Path>) -> Result<Checkpoint, GanError> {
        if pairs.is_empty() {
            return Err(GanError::EmptyDataset("no training pairs".into()));
        }
        let total = self.state.train.epochs;
        while self.state.epoch < total {
            let started = Instant::now();
            let s = self.run_epoch(pairs)?;
            log::info!(
                "event=epoch epoch={} of={} g_adv={:.5} g_l1={:.5} d_loss={:.5} d_acc_real={:.3} d_acc_fake={:.3} secs={:.2}",
                s.epoch,
                total,
                s.g_adv,
                s.g_l1,
                s.d_loss,
                s.d_acc_real,
                s.d_acc_fake,
                started.elapsed().as_secs_f64()
            );
            let every = self.state.train.checkpoint_every;
            if let Some(dir) = out_dir {
                if s.epoch == total || (every > 0 && s.epoch % every == 0) {
                    write_outputs(&self.state, dir)?;
                }
            }
        }
        if let Some(dir) = out_dir {
            if self.state.history.last().map(|h| h.epoch) != Some(self.state.epoch) || self.state.epoch == 0 {
                write_outputs(&self.state, dir)?;
            }
        }
        Ok(self.state)
    }
}

fn with_position(e: GanError, epoch: usize, step: usize, at: TileId) -> GanError {
    match e {
        GanError::NonFinite { term, value, .. } => GanError::NonFinite { term, value, epoch, step, tile: Some(at.to_string()) },
        other => other,
    }
}

/// Writes `checkpoint.tsck` and `train_log.csv` into `dir`.
pub fn write_outputs(state: &Checkpoint, dir: &Path) -> Result<(), GanError> {
    state.save(&dir.join(CHECKPOINT_FILE))?;
    let path = dir.join(LOG_FILE);
    std::fs::write(&path, history_csv(&state.history)).map_err(|e| GanError::Io { path: path.display().to_string(), source: e })?;
    log::info!("event=checkpoint epoch={} path={}", state.epoch, dir.join(CHECKPOINT_FILE).display());
    Ok(())
}

/// Trains a fresh model on the manifest's train split.
pub fn train(
    manifest: &DatasetManifest,
    generator: &GeneratorConfig,
    discriminator: &DiscriminatorConfig,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<Checkpoint, GanError> {
    let session = TrainSession::new(generator, discriminator, cfg)?;
    let pairs = load_training_pairs(manifest, generator.resolution)?;
    log::info!("event=train_start pairs={} epochs={} seed={}", pairs.len(), cfg.epochs, cfg.seed);
    session.run(&pairs, out_dir)
}

/// Continues a checkpoint up to its configured epoch count.
pub fn resume(manifest: &DatasetManifest, checkpoint: Checkpoint, out_dir: Option<&Path>) -> Result<Checkpoint, GanError> {
    let pairs = load_training_pairs(manifest, checkpoint.generator.config.resolution)?;
    TrainSession::from_checkpoint(checkpoint).run(&pairs, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_a_seeded_permutation() {
        let a = epoch_order(3, 1, 10);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(3, 1, 10));
        assert_ne!(a, epoch_order(3, 2, 10));
    }

    #[test]
    fn csv_layout() {
        let h = EpochStats { epoch: 1, g_adv: 0.5, g_l1: 0.25, d_loss: 0.75, d_acc_real: 1.0, d_acc_fake: 0.0 };
        assert_eq!(history_csv(&[h]), format!("{LOG_HEADER}\n1,0.5,0.25,0.75,1,0\n"));
    }
}

//! Resnet generator, patch discriminator, training loop, checkpoints and
//! tile-level inference.

mod checkpoint;
mod config;
pub mod data;
mod generate;
mod model;
mod train;

use thiserror::Error;

use crate::tensor::TensorError;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{receptive_field, DiscriminatorConfig, GeneratorConfig, PatchReduction, TrainConfig};
pub use generate::{generate, GenerateReport};
pub use model::{build_discriminator, build_generator, discriminator_seed, generator_seed, Discriminator, Generator};
pub use train::{
    epoch_order, history_csv, resume, train, write_outputs, EpochStats, GeneratorLoss, StepStats, TrainSession, CHECKPOINT_FILE,
    LOG_FILE, LOG_HEADER,
};

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset is empty: no training tiles in {0}")]
    EmptyDataset(String),
    #[error("unpaired tiles, missing counterparts: {}", .0.join(", "))]
    Unpaired(Vec<String>),
    #[error("data error: {0}")]
    Data(String),
    #[error("non-finite {term} = {value} at epoch {epoch}, step {step}{}", tile.as_deref().map(|t| format!(", tile {t}")).unwrap_or_default())]
    NonFinite { term: &'static str, value: f64, epoch: usize, step: usize, tile: Option<String> },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl GanError {
    /// True for errors caused by invalid user input rather than a failure
    /// during the run.
    pub fn is_validation(&self) -> bool {
        matches!(self, GanError::Config(_) | GanError::EmptyDataset(_) | GanError::Unpaired(_))
    }
}

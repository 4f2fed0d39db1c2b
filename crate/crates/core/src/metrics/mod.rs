//! Fréchet distance between feature populations and mean IoU of building masks.

use std::path::PathBuf;

use thiserror::Error;

use crate::tiling::TileId;

mod evaluate;
mod features;
mod iou;
pub mod linalg;
mod stats;

pub use evaluate::{evaluate, EvalReport, DEFAULT_THRESHOLD};
pub use features::{extract_features, read_feature_file, write_feature_file, FeatureExtractorSpec, FEATURE_MAGIC, FEATURE_VERSION};
pub use iou::{iou, iou_counts, miou, MiouResult, TileIou};
pub use linalg::{sqrtm_psd, symmetric_eigen, Matrix};
pub use stats::{fit_stats, frechet_distance, frechet_distance_with, FeatureStats, FrechetOptions, FrechetOutcome, Regularization};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("matrix asymmetric by {0:e}")]
    Asymmetric(f64),
    #[error("matrix has eigenvalue {0:e}, not positive semi-definite")]
    NotPsd(f64),
    #[error("eigensolver did not converge in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("frechet distance came out negative ({0:e})")]
    Negative(f64),
    #[error("unpaired tile addresses: {}", .0.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "))]
    Unpaired(Vec<TileId>),
    #[error("invalid extractor: {0}")]
    Extractor(String),
    #[error("feature file {path}: {message}")]
    FeatureFile { path: PathBuf, message: String },
    #[error("no tiles under {0}")]
    EmptyDirectory(PathBuf),
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

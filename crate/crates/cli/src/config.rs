//! The pipeline configuration file: one JSON document whose fields every
//! subcommand can override from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tilesynth_core::metrics::{FeatureExtractorSpec, DEFAULT_THRESHOLD};
use tilesynth_core::raster::{InputStyle, StylePalette};
use tilesynth_nn::gan::{DiscriminatorConfig, GeneratorConfig, TrainConfig};

use crate::CliError;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "TILESYNTH_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// GeoJSON vector layers.
    pub vectors: Option<PathBuf>,
    /// Dataset root (contains manifest.json).
    pub dataset: Option<PathBuf>,
    /// Checkpoint file or training run directory.
    pub checkpoint: Option<PathBuf>,
    /// Output of the current subcommand.
    pub output: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Tile tree to stitch.
    pub tiles: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 256 px, W=64, 9 residual blocks, discriminator widths 64..512.
    #[default]
    Full,
    /// 64 px, W=16, 3 residual blocks, discriminator widths 16..128.
    Tiny,
}

impl Profile {
    pub fn generator(self) -> GeneratorConfig {
        match self {
            Profile::Full => GeneratorConfig::default(),
            Profile::Tiny => GeneratorConfig::tiny(),
        }
    }

    pub fn discriminator(self) -> DiscriminatorConfig {
        match self {
            Profile::Full => DiscriminatorConfig::default(),
            Profile::Tiny => DiscriminatorConfig::tiny(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub zoom: u8,
    pub style: InputStyle,
    pub palette: StylePalette,
    pub tile_px: u32,
    pub min_building_px: usize,
    /// Fixture city size in blocks (columns, rows).
    pub blocks: (usize, usize),
    pub profile: Profile,
    /// Explicit architectures; when absent the profile decides.
    pub generator: Option<GeneratorConfig>,
    pub discriminator: Option<DiscriminatorConfig>,
    pub train: TrainConfig,
    /// Feature extractor, e.g. `gray:8`, `moments:2` or `external:DIR`.
    pub extractor: String,
    pub threshold: u8,
    /// Seed for every stochastic stage; overrides `train.seed`.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            zoom: 16,
            style: InputStyle::RoadsCRHD,
            palette: StylePalette::default(),
            tile_px: 256,
            min_building_px: 50,
            blocks: (4, 4),
            profile: Profile::default(),
            generator: None,
            discriminator: None,
            train: TrainConfig::default(),
            extractor: FeatureExtractorSpec::default().to_string(),
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        self.generator.clone().unwrap_or_else(|| self.profile.generator())
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        self.discriminator.clone().unwrap_or_else(|| self.profile.discriminator())
    }

    pub fn extractor_spec(&self) -> Result<FeatureExtractorSpec, CliError> {
        FeatureExtractorSpec::parse(&self.extractor).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Checks every field; runs before any work.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.zoom > 24 {
            return bad(format!("zoom {} above 24", self.zoom));
        }
        if self.tile_px == 0 {
            return bad("tile_px must be positive".into());
        }
        if self.blocks.0 == 0 || self.blocks.1 == 0 {
            return bad("fixture blocks must be at least 1x1".into());
        }
        self.palette.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.generator_config().validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.discriminator_config().validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.extractor_spec()?;
        Ok(())
    }
}

/// Parses `WxH` block counts.
pub fn parse_blocks(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad block count {v:?}"));
    Ok((p(w)?, p(h)?))
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tilesynth_core::raster::{InputStyle, Split};
use tilesynth_nn::gan::PatchReduction;

use crate::config::{parse_blocks, PipelineConfig, Profile, CONFIG_ENV};

#[derive(Debug, Parser)]
#[command(name = "tilesynth", version, about = "Synthesize building-footprint map tiles from road and land-use vectors")]
pub struct Cli {
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for tile-level work (rasterize, generate, stitch, evaluate).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    /// Log more (repeat for trace output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic gridiron city as GeoJSON.
    Fixture(FixtureArgs),
    /// Render input/target tile pairs and a dataset manifest.
    Rasterize(RasterizeArgs),
    /// Train the generator/discriminator pair on a dataset.
    Train(TrainArgs),
    /// Translate a tile tree with a trained generator.
    Generate(GenerateArgs),
    /// Reassemble a tile tree into one georeferenced mosaic.
    Stitch(StitchArgs),
    /// Compare generated tiles against ground truth (FID-style distance and mIoU).
    Evaluate(EvaluateArgs),
    /// Serve tile trees over HTTP as XYZ layers.
    Serve(ServeArgs),
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// City size in blocks, e.g. 4x4.
    #[arg(long, value_parser = parse_blocks)]
    pub blocks: Option<(usize, usize)>,
    /// Output GeoJSON file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RasterizeArgs {
    /// GeoJSON vector layers.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Dataset root to create.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub zoom: Option<u8>,
    /// bw, crhd or landuse.
    #[arg(long)]
    pub style: Option<InputStyle>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
    #[arg(long)]
    pub min_building_px: Option<usize>,
    #[arg(long)]
    pub tile_px: Option<u32>,
    /// JSON file with palette overrides.
    #[arg(long)]
    pub palette: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Run directory for the checkpoint and loss log.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub lambda_l1: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long, value_parser = parse_reduction)]
    pub patch_reduction: Option<PatchReduction>,
    /// Discriminator sees target tiles only.
    #[arg(long)]
    pub unconditional: bool,
    /// Continue from this checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

fn parse_reduction(s: &str) -> Result<PatchReduction, String> {
    match s {
        "per-patch" | "per_patch_loss" => Ok(PatchReduction::PerPatchLoss),
        "mean-logit" | "mean_logit" => Ok(PatchReduction::MeanLogit),
        other => Err(format!("unknown patch reduction {other:?} (expected per-patch or mean-logit)")),
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Checkpoint file, or a training run directory holding one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Input tile tree; defaults to the dataset's input tree.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset whose manifest selects tiles with --split.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Only tiles of this split (train or test).
    #[arg(long, value_parser = parse_split, requires = "dataset")]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    /// Tile tree to read.
    #[arg(long)]
    pub tiles: Option<PathBuf>,
    #[arg(long)]
    pub zoom: Option<u8>,
    /// min_lon,min_lat,max_lon,max_lat; defaults to the extent of the tiles present.
    #[arg(long)]
    pub bbox: Option<String>,
    /// Output PNG; a world file and missing-tile list are written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub generated: Option<PathBuf>,
    /// Ground-truth tiles; defaults to the dataset's target tree.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub extractor: Option<String>,
    #[arg(long)]
    pub threshold: Option<u8>,
    /// Directory for report.json and summary.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Only tiles of this split (train or test).
    #[arg(long, value_parser = parse_split, requires = "dataset")]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Layer mount as NAME=DIR; repeat for several layers.
    #[arg(long = "layer", required = true)]
    pub layers: Vec<String>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, v: &Option<PathBuf>) {
    if v.is_some() {
        slot.clone_from(v);
    }
}

impl Cli {
    /// Folds every flag of the chosen subcommand into `cfg`.
    pub fn apply(&self, cfg: &mut PipelineConfig) -> Result<(), String> {
        set(&mut cfg.seed, self.seed);
        let p = &mut cfg.paths;
        match &self.command {
            Command::Fixture(a) => {
                set(&mut cfg.blocks, a.blocks);
                set_path(&mut p.output, &a.out);
            }
            Command::Rasterize(a) => {
                set_path(&mut p.vectors, &a.input);
                set_path(&mut p.output, &a.out);
                set(&mut cfg.zoom, a.zoom);
                set(&mut cfg.style, a.style);
                set(&mut cfg.train.split_ratio, a.split_ratio);
                set(&mut cfg.min_building_px, a.min_building_px);
                set(&mut cfg.tile_px, a.tile_px);
                if let Some(path) = &a.palette {
                    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read palette {}: {e}", path.display()))?;
                    cfg.palette = serde_json::from_str(&text).map_err(|e| format!("palette {}: {e}", path.display()))?;
                }
            }
            Command::Train(a) => {
                set_path(&mut p.dataset, &a.dataset);
                set_path(&mut p.output, &a.out);
                if let Some(profile) = a.profile {
                    cfg.profile = profile;
                    cfg.generator = None;
                    cfg.discriminator = None;
                }
                let t = &mut cfg.train;
                set(&mut t.epochs, a.epochs);
                set(&mut t.lr, a.lr);
                set(&mut t.beta1, a.beta1);
                set(&mut t.beta2, a.beta2);
                set(&mut t.lambda_l1, a.lambda_l1);
                set(&mut t.checkpoint_every, a.checkpoint_every);
                set(&mut t.patch_reduction, a.patch_reduction);
                if a.unconditional {
                    let mut d = cfg.discriminator_config();
                    d.conditional = false;
                    cfg.discriminator = Some(d);
                }
            }
            Command::Generate(a) => {
                set_path(&mut p.checkpoint, &a.checkpoint);
                set_path(&mut p.tiles, &a.input);
                set_path(&mut p.output, &a.out);
                set_path(&mut p.dataset, &a.dataset);
            }
            Command::Stitch(a) => {
                set_path(&mut p.tiles, &a.tiles);
                set_path(&mut p.output, &a.out);
                set(&mut cfg.zoom, a.zoom);
            }
            Command::Evaluate(a) => {
                set_path(&mut p.generated, &a.generated);
                set_path(&mut p.truth, &a.truth);
                set_path(&mut p.output, &a.out);
                set_path(&mut p.dataset, &a.dataset);
                set(&mut cfg.extractor, a.extractor.clone());
                set(&mut cfg.threshold, a.threshold);
            }
            Command::Serve(_) => {}
        }
        cfg.train.seed = cfg.seed;
        Ok(())
    }
}

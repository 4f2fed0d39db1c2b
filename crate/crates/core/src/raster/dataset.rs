use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::palette::{InputStyle, StylePalette};
use super::render::ProjectedLayers;
use super::RasterError;
use crate::geodata::{BBox, VectorLayerSet};
use crate::image::RasterTile;
use crate::rng::mix64;
use crate::tiling::{tiles_covering_bbox, TileId, DEFAULT_TILE_PX};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "tilesynth-dataset/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split {other:?} (expected train or test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestTile {
    pub z: u8,
    pub x: u64,
    pub y: u64,
    pub split: Split,
    pub building_px: usize,
}

impl ManifestTile {
    pub fn id(&self) -> TileId {
        TileId { z: self.z, x: self.x, y: self.y }
    }
}

/// Record of a rendered dataset, stored as `{root}/manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub root: PathBuf,
    pub style: InputStyle,
    pub zoom: u8,
    pub tile_px: u32,
    pub split_ratio: f64,
    pub min_building_px: usize,
    pub palette_hash: String,
    pub source_bbox: BBox,
    pub seed: u64,
    /// Kept tiles in row-major order.
    pub tiles: Vec<ManifestTile>,
}

impl DatasetManifest {
    pub fn input_dir(&self) -> PathBuf {
        self.root.join("input")
    }

    pub fn target_dir(&self) -> PathBuf {
        self.root.join("target")
    }

    pub fn split_tiles(&self, split: Split) -> Vec<TileId> {
        self.tiles.iter().filter(|t| t.split == split).map(ManifestTile::id).collect()
    }

    pub fn save(&self) -> Result<(), RasterError> {
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|source| RasterError::Io { path: path.display().to_string(), source })
    }

    /// Loads `{root}/manifest.json`; `root` in the result is the directory it
    /// was loaded from, so datasets stay valid when moved.
    pub fn load(root: &Path) -> Result<Self, RasterError> {
        let path = root.join(MANIFEST_FILE);
        let err = |message: String| RasterError::Manifest { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(err(format!("unsupported format {:?}", m.format)));
        }
        m.root = root.to_path_buf();
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub zoom: u8,
    pub style: InputStyle,
    pub palette: StylePalette,
    pub split_ratio: f64,
    pub min_building_px: usize,
    pub seed: u64,
    pub tile_px: u32,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            zoom: 16,
            style: InputStyle::RoadsCRHD,
            palette: StylePalette::default(),
            split_ratio: 0.8,
            min_building_px: 50,
            seed: 0,
            tile_px: DEFAULT_TILE_PX,
        }
    }
}

/// Seeded 64-bit hash of a tile address.
pub fn split_hash(t: TileId, seed: u64) -> u64 {
    mix64(mix64(mix64(seed ^ t.z as u64) ^ t.x) ^ t.y)
}

/// Assigns the `round(ratio * n)` tiles with the smallest seeded hashes to
/// train and the rest to test. Returns one split per input tile, in order.
pub fn assign_splits(tiles: &[TileId], ratio: f64, seed: u64) -> Vec<Split> {
    let n_train = ((ratio * tiles.len() as f64).round() as usize).min(tiles.len());
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    order.sort_by_key(|&i| (split_hash(tiles[i], seed), tiles[i].row_major_key()));
    let mut splits = vec![Split::Test; tiles.len()];
    for &i in &order[..n_train] {
        splits[i] = Split::Train;
    }
    splits
}

fn write_tile(tile: &RasterTile, root: &Path, kind: &str, t: TileId) -> Result<(), RasterError> {
    tile.save_png(&root.join(kind).join(t.relative_path())).map_err(RasterError::from)
}

/// Renders every covering tile of the layers' extent, drops tiles whose target
/// has fewer than `min_building_px` building pixels, writes the rest under
/// `{root}/{input|target}/{z}/{x}/{y}.png` and records them in a manifest.
pub fn build_dataset(layers: &VectorLayerSet, opts: &DatasetOptions, out_root: &Path) -> Result<DatasetManifest, RasterError> {
    opts.palette.validate()?;
    if !(opts.split_ratio > 0.0 && opts.split_ratio < 1.0) {
        return Err(RasterError::Options(format!("split_ratio {} outside (0, 1)", opts.split_ratio)));
    }
    if opts.tile_px == 0 {
        return Err(RasterError::Options("tile_px must be positive".into()));
    }
    let bbox = layers.bbox.ok_or(RasterError::NoExtent)?;
    let covering = tiles_covering_bbox(&bbox, opts.zoom)?;
    std::fs::create_dir_all(out_root)
        .map_err(|source| RasterError::Io { path: out_root.display().to_string(), source })?;

    let projected = ProjectedLayers::new(layers, opts.zoom, opts.tile_px);
    let rendered: Vec<Option<(TileId, usize)>> = covering
        .par_iter()
        .map(|&t| {
            let target = projected.render_target(t, &opts.palette);
            let building_px = target.count_color(opts.palette.building_color);
            if building_px < opts.min_building_px {
                return Ok(None);
            }
            let input = projected.render_input(t, opts.style, &opts.palette);
            write_tile(&input, out_root, "input", t)?;
            write_tile(&target, out_root, "target", t)?;
            Ok(Some((t, building_px)))
        })
        .collect::<Result<_, RasterError>>()?;
    let kept: Vec<(TileId, usize)> = rendered.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(RasterError::EmptyDataset {
            covering: covering.len(),
            zoom: opts.zoom,
            min_building_px: opts.min_building_px,
        });
    }
    let ids: Vec<TileId> = kept.iter().map(|(t, _)| *t).collect();
    let splits = assign_splits(&ids, opts.split_ratio, opts.seed);
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.to_string(),
        root: out_root.to_path_buf(),
        style: opts.style,
        zoom: opts.zoom,
        tile_px: opts.tile_px,
        split_ratio: opts.split_ratio,
        min_building_px: opts.min_building_px,
        palette_hash: opts.palette.content_hash(),
        source_bbox: bbox,
        seed: opts.seed,
        tiles: kept
            .iter()
            .zip(splits)
            .map(|((t, building_px), split)| ManifestTile { z: t.z, x: t.x, y: t.y, split, building_px: *building_px })
            .collect(),
    };
    manifest.save()?;
    log::info!(
        "stage=rasterize zoom={} style={} covering={} kept={} train={}",
        opts.zoom,
        opts.style,
        covering.len(),
        manifest.tiles.len(),
        manifest.split_tiles(Split::Train).len()
    );
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_hit_the_ratio() {
        for n in 1..60u64 {
            let tiles: Vec<TileId> = (0..n).map(|i| TileId { z: 16, x: 100 + i % 7, y: 200 + i / 7 }).collect();
            let splits = assign_splits(&tiles, 0.8, 42);
            let train = splits.iter().filter(|s| **s == Split::Train).count();
            let exact = 0.8 * n as f64;
            assert!(train == exact.floor() as usize || train == exact.ceil() as usize, "n={n} train={train}");
        }
    }

    #[test]
    fn split_is_seeded() {
        let tiles: Vec<TileId> = (0..40).map(|i| TileId { z: 16, x: i, y: 7 }).collect();
        assert_eq!(assign_splits(&tiles, 0.5, 1), assign_splits(&tiles, 0.5, 1));
        assert_ne!(assign_splits(&tiles, 0.5, 1), assign_splits(&tiles, 0.5, 2));
    }
}

//! Reassembling tile trees into georeferenced mosaics.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::BBox;
use crate::image::{load_tile, ImageError, Rgb, RgbImage};
use crate::raster::binarize;
use crate::tiling::{tile_span_mercator, tile_to_bounds, tiles_covering_bbox, TileId, TilingError};
use crate::xyz::tile_path;

pub const NODATA_COLOR: Rgb = [0xFF, 0x00, 0xFF];
pub const DIFF_MATCH: Rgb = [0xFF, 0xFF, 0xFF];
pub const DIFF_ONLY_A: Rgb = [0xD6, 0x2F, 0x2F];
pub const DIFF_ONLY_B: Rgb = [0x1F, 0x77, 0xB4];

#[derive(Debug, Error)]
pub enum StitchError {
    #[error(transparent)]
    Tiling(#[from] TilingError),
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error("no tiles present at zoom {z} under {root}")]
    NoTiles { z: u8, root: PathBuf },
    #[error("region resolves to no tiles")]
    EmptyRegion,
    #[error("tile {tile} is at zoom {tile_z}, expected {z}", tile_z = tile.z)]
    ZoomMismatch { tile: TileId, z: u8 },
    #[error("tile {tile} is {found}px, expected {expected}px")]
    TileSize { tile: TileId, found: u32, expected: u32 },
    #[error("mosaics differ: {0}")]
    Mismatch(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Affine pixel-to-Mercator mapping of a mosaic: top-left corner and pixel size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size: f64,
}

impl GeoTransform {
    /// Mercator coordinates of a pixel corner.
    pub fn apply(&self, px: f64, py: f64) -> (f64, f64) {
        (self.origin_x + px * self.pixel_size, self.origin_y - py * self.pixel_size)
    }

    /// Six-line world file; the reference point is the top-left pixel center.
    pub fn world_file(&self) -> String {
        let half = 0.5 * self.pixel_size;
        format!(
            "{:.10}\n0.0\n0.0\n{:.10}\n{:.10}\n{:.10}\n",
            self.pixel_size,
            -self.pixel_size,
            self.origin_x + half,
            self.origin_y - half
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mosaic {
    pub image: RgbImage,
    pub z: u8,
    pub x_min: u64,
    pub y_min: u64,
    pub cols: u64,
    pub rows: u64,
    pub tile_px: u32,
    pub geotransform: GeoTransform,
}

impl Mosaic {
    /// Pixel offset of a tile inside the mosaic, if it lies within it.
    pub fn offset_of(&self, t: TileId) -> Option<(u32, u32)> {
        if t.z != self.z || t.x < self.x_min || t.y < self.y_min || t.x >= self.x_min + self.cols || t.y >= self.y_min + self.rows {
            return None;
        }
        Some((((t.x - self.x_min) * self.tile_px as u64) as u32, ((t.y - self.y_min) * self.tile_px as u64) as u32))
    }

    pub fn tiles(&self) -> impl Iterator<Item = TileId> + '_ {
        (self.y_min..self.y_min + self.rows).flat_map(move |y| (self.x_min..self.x_min + self.cols).map(move |x| TileId { z: self.z, x, y }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    BBox(BBox),
    /// The mosaic spans the bounding rectangle of the listed tiles.
    Tiles(Vec<TileId>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchResult {
    pub mosaic: Mosaic,
    pub missing: Vec<TileId>,
}

impl StitchResult {
    /// Writes `{stem}.png`, `{stem}.pgw` and `{stem}.missing.json` next to each other.
    pub fn save(&self, png_path: &Path) -> Result<(), StitchError> {
        self.mosaic.image.save_png(png_path).map_err(|e| StitchError::Image { path: png_path.to_path_buf(), source: e })?;
        let pgw = png_path.with_extension("pgw");
        std::fs::write(&pgw, self.mosaic.geotransform.world_file()).map_err(|e| StitchError::Io { path: pgw.clone(), source: e })?;
        let manifest = serde_json::json!({
            "z": self.mosaic.z,
            "nodata_color": crate::image::hex_color(NODATA_COLOR),
            "missing": self.missing.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
        });
        let miss = png_path.with_extension("missing.json");
        std::fs::write(&miss, serde_json::to_string_pretty(&manifest).expect("serializes")).map_err(|e| StitchError::Io { path: miss.clone(), source: e })
    }
}

/// Copies every tile of `region` found under `tiles_dir/{z}/{x}/{y}.png` into one
/// raster. Absent tiles are painted [`NODATA_COLOR`] and reported.
pub fn stitch(tiles_dir: &Path, z: u8, region: &Region) -> Result<StitchResult, StitchError> {
    let (x_min, y_min, x_max, y_max) = match region {
        Region::BBox(b) => {
            let tiles = tiles_covering_bbox(b, z)?;
            let (first, last) = (tiles.first().ok_or(StitchError::EmptyRegion)?, tiles.last().unwrap());
            (first.x, first.y, last.x, last.y)
        }
        Region::Tiles(list) => {
            if list.is_empty() {
                return Err(StitchError::EmptyRegion);
            }
            if let Some(t) = list.iter().find(|t| t.z != z) {
                return Err(StitchError::ZoomMismatch { tile: *t, z });
            }
            let xs = list.iter().map(|t| t.x);
            let ys = list.iter().map(|t| t.y);
            (xs.clone().min().unwrap(), ys.clone().min().unwrap(), xs.max().unwrap(), ys.max().unwrap())
        }
    };
    let (cols, rows) = (x_max - x_min + 1, y_max - y_min + 1);

    let mut present = Vec::new();
    let mut missing = Vec::new();
    for y in y_min..=y_max {
        for x in x_min..=x_max {
            let t = TileId { z, x, y };
            let p = tile_path(tiles_dir, t);
            if p.is_file() {
                let img = load_tile(&p).map_err(|e| StitchError::Image { path: p.clone(), source: e })?;
                present.push((t, img));
            } else {
                missing.push(t);
            }
        }
    }
    let tile_px = match present.first() {
        Some((_, img)) => img.width(),
        None => return Err(StitchError::NoTiles { z, root: tiles_dir.to_path_buf() }),
    };
    if let Some((t, img)) = present.iter().find(|(_, img)| img.width() != tile_px) {
        return Err(StitchError::TileSize { tile: *t, found: img.width(), expected: tile_px });
    }

    let width = u32::try_from(cols * tile_px as u64).map_err(|_| StitchError::Mismatch("mosaic too wide".into()))?;
    let height = u32::try_from(rows * tile_px as u64).map_err(|_| StitchError::Mismatch("mosaic too tall".into()))?;
    let mut image = RgbImage::filled(width, height, NODATA_COLOR);
    for (t, img) in &present {
        image.blit(img, ((t.x - x_min) * tile_px as u64) as u32, ((t.y - y_min) * tile_px as u64) as u32);
    }
    let origin = tile_to_bounds(TileId { z, x: x_min, y: y_min });
    let geotransform = GeoTransform {
        origin_x: origin.merc_min_x,
        origin_y: origin.merc_max_y,
        pixel_size: tile_span_mercator(z) / tile_px as f64,
    };
    if !missing.is_empty() {
        log::warn!(
            "stage=stitch z={z} missing={} tiles=\"{}\"",
            missing.len(),
            missing.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
        );
    }
    log::info!("stage=stitch z={z} cols={cols} rows={rows} present={} px={width}x{height}", present.len());
    Ok(StitchResult {
        mosaic: Mosaic { image, z, x_min, y_min, cols, rows, tile_px, geotransform },
        missing,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MosaicComparison {
    pub intersection: u64,
    pub union: u64,
    pub iou: f64,
    pub diff: RgbImage,
}

/// IoU of the binarized mosaics and a difference picture: white where the
/// masks agree, [`DIFF_ONLY_A`] / [`DIFF_ONLY_B`] where only one is set.
pub fn compare_mosaics(a: &Mosaic, b: &Mosaic, threshold: u8) -> Result<MosaicComparison, StitchError> {
    if (a.image.width(), a.image.height()) != (b.image.width(), b.image.height()) {
        return Err(StitchError::Mismatch(format!(
            "{}x{} vs {}x{}",
            a.image.width(),
            a.image.height(),
            b.image.width(),
            b.image.height()
        )));
    }
    if a.geotransform != b.geotransform || a.z != b.z {
        return Err(StitchError::Mismatch("geotransforms differ".into()));
    }
    let ma = binarize(&a.image, threshold);
    let mb = binarize(&b.image, threshold);
    let (intersection, union) = ma.overlap(&mb);
    let mut diff = RgbImage::filled(a.image.width(), a.image.height(), DIFF_MATCH);
    for y in 0..diff.height() {
        for x in 0..diff.width() {
            match (ma.get(x, y), mb.get(x, y)) {
                (true, false) => diff.put(x, y, DIFF_ONLY_A),
                (false, true) => diff.put(x, y, DIFF_ONLY_B),
                _ => {}
            }
        }
    }
    let iou = if union == 0 { 1.0 } else { intersection as f64 / union as f64 };
    Ok(MosaicComparison { intersection, union, iou, diff })
}

/// Distinct tiles in a list, for callers that assemble regions by hand.
pub fn dedup_tiles(tiles: &[TileId]) -> Vec<TileId> {
    tiles.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

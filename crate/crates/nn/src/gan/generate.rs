use std::path::Path;

use rayon::prelude::*;
use tilesynth_core::image::load_tile;
use tilesynth_core::xyz::{list_tiles, tile_path};
use tilesynth_core::TileId;

use super::data::{tensor_to_tile, tile_to_tensor};
use super::model::Generator;
use super::GanError;
use crate::layers::Module;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerateReport {
    pub written: Vec<TileId>,
    pub errors: Vec<(TileId, String)>,
}

/// Translates every tile under `input_dir` (optionally only `only`) into
/// the same address under `output_dir`. Each output tile has the size of its
/// input; the network runs at its own resolution in between. Failures are
/// collected per tile and do not stop the run.
pub fn generate(generator: &Generator, input_dir: &Path, output_dir: &Path, only: Option<&[TileId]>) -> Result<GenerateReport, GanError> {
    let mut tiles = list_tiles(input_dir);
    if let Some(keep) = only {
        tiles.retain(|(t, _)| keep.contains(t));
    }
    std::fs::create_dir_all(output_dir).map_err(|e| GanError::Io { path: output_dir.display().to_string(), source: e })?;
    if tiles.is_empty() {
        log::warn!("event=generate_empty input={}", input_dir.display());
        return Ok(GenerateReport::default());
    }
    let resolution = generator.config.resolution;
    let results: Vec<(TileId, Result<(), String>)> = tiles
        .par_iter()
        .map_init(
            || generator.clone(),
            |g, (t, path)| {
                let mut run = || -> Result<(), String> {
                    let img = load_tile(path).map_err(|e| e.to_string())?;
                    let x = tile_to_tensor(&img, resolution)?;
                    let y = g.forward(&x).map_err(|e| e.to_string())?;
                    let out = tensor_to_tile(&y, img.width() as usize)?;
                    out.save_png(&tile_path(output_dir, *t)).map_err(|e| e.to_string())
                };
                (*t, run())
            },
        )
        .collect();
    let mut report = GenerateReport::default();
    for (t, r) in results {
        match r {
            Ok(()) => report.written.push(t),
            Err(m) => {
                log::warn!("event=generate_tile_failed tile={t} error={m:?}");
                report.errors.push((t, m));
            }
        }
    }
    log::info!("event=generate_done written={} failed={}", report.written.len(), report.errors.len());
    Ok(report)
}

//! Conversions between 8-bit tiles and [−1, 1] tensors, and loading of the
//! training pairs listed in a dataset manifest.

use std::path::Path;

use tilesynth_core::image::{load_tile, RgbImage};
use tilesynth_core::raster::{DatasetManifest, Split};
use tilesynth_core::xyz::tile_path;
use tilesynth_core::TileId;

use super::GanError;
use crate::tensor::Tensor;

/// Integer factor between a tile side and the model resolution.
pub fn scale_factor(tile_px: usize, resolution: usize) -> Result<usize, String> {
    if tile_px == 0 || tile_px % resolution != 0 {
        return Err(format!("tile size {tile_px} px is not a positive multiple of the model resolution {resolution}"));
    }
    Ok(tile_px / resolution)
}

/// Box-averages the tile down to `resolution` and maps 0..255 to [−1, 1].
pub fn tile_to_tensor(img: &RgbImage, resolution: usize) -> Result<Tensor, String> {
    let side = img.width() as usize;
    if img.height() as usize != side {
        return Err(format!("tile is {}x{}, expected a square", img.width(), img.height()));
    }
    let f = scale_factor(side, resolution)?;
    let src = img.data();
    let r = resolution;
    let denom = (f * f) as f64 * 127.5;
    let mut data = vec![0f32; 3 * r * r];
    for c in 0..3 {
        for oy in 0..r {
            for ox in 0..r {
                let mut sum = 0u32;
                for dy in 0..f {
                    let row = (oy * f + dy) * side;
                    for dx in 0..f {
                        sum += src[(row + ox * f + dx) * 3 + c] as u32;
                    }
                }
                data[(c * r + oy) * r + ox] = (sum as f64 / denom - 1.0) as f32;
            }
        }
    }
    Ok(Tensor::new(&[1, 3, r, r], data).expect("sized above"))
}

/// round(255·(t+1)/2) per channel, repeated into f×f blocks to reach `tile_px`.
pub fn tensor_to_tile(t: &Tensor, tile_px: usize) -> Result<RgbImage, String> {
    let (n, c, h, w) = t.dims4("tensor_to_tile").map_err(|e| e.to_string())?;
    if n != 1 || c != 3 || h != w {
        return Err(format!("expected a 1x3xRxR tensor, got {:?}", t.shape()));
    }
    let f = scale_factor(tile_px, h)?;
    let quant: Vec<u8> = t.data().iter().map(|&v| (255.0 * (v as f64 + 1.0) / 2.0).round().clamp(0.0, 255.0) as u8).collect();
    let mut out = vec![0u8; tile_px * tile_px * 3];
    for y in 0..tile_px {
        for x in 0..tile_px {
            let (sy, sx) = (y / f, x / f);
            for ch in 0..3 {
                out[(y * tile_px + x) * 3 + ch] = quant[(ch * h + sy) * w + sx];
            }
        }
    }
    Ok(RgbImage::from_raw(tile_px as u32, tile_px as u32, out).expect("sized above"))
}

#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub tile: TileId,
    pub input: Tensor,
    pub target: Tensor,
}

/// Loads every train-split pair at the model resolution.
pub fn load_training_pairs(manifest: &DatasetManifest, resolution: usize) -> Result<Vec<TrainingPair>, GanError> {
    let tiles = manifest.split_tiles(Split::Train);
    if tiles.is_empty() {
        return Err(GanError::EmptyDataset(manifest.root.display().to_string()));
    }
    scale_factor(manifest.tile_px as usize, resolution).map_err(GanError::Config)?;
    let (input_dir, target_dir) = (manifest.input_dir(), manifest.target_dir());
    let mut missing = Vec::new();
    for &t in &tiles {
        for (kind, dir) in [("input", &input_dir), ("target", &target_dir)] {
            if !tile_path(dir, t).is_file() {
                missing.push(format!("{kind} {t}"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(GanError::Unpaired(missing));
    }
    let load = |dir: &Path, t: TileId| -> Result<Tensor, GanError> {
        let path = tile_path(dir, t);
        let img = load_tile(&path).map_err(|e| GanError::Data(e.to_string()))?;
        if img.width() != manifest.tile_px {
            return Err(GanError::Data(format!("{} is {} px, manifest says {}", path.display(), img.width(), manifest.tile_px)));
        }
        tile_to_tensor(&img, resolution).map_err(|m| GanError::Data(format!("{}: {m}", path.display())))
    };
    tiles.into_iter().map(|t| Ok(TrainingPair { tile: t, input: load(&input_dir, t)?, target: load(&target_dir, t)? })).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes_map_to_unit_range() {
        let white = RgbImage::filled(8, 8, [255, 255, 255]);
        let black = RgbImage::filled(8, 8, [0, 0, 0]);
        assert!(tile_to_tensor(&white, 8).unwrap().data().iter().all(|v| *v == 1.0));
        assert!(tile_to_tensor(&black, 4).unwrap().data().iter().all(|v| *v == -1.0));
    }

    #[test]
    fn box_average() {
        let mut img = RgbImage::filled(4, 4, [0, 0, 0]);
        img.put(0, 0, [255, 0, 0]);
        img.put(1, 1, [255, 0, 0]);
        let t = tile_to_tensor(&img, 2).unwrap();
        assert_eq!(t.data()[0], 0.0);
        assert_eq!(t.data()[1], -1.0);
        assert!(tile_to_tensor(&img, 3).is_err());
    }

    #[test]
    fn quantisation_round_trips_8_bit_values() {
        let mut img = RgbImage::filled(4, 4, [0, 0, 0]);
        for (i, p) in img.data_mut().iter_mut().enumerate() {
            *p = (i * 5 % 256) as u8;
        }
        let t = tile_to_tensor(&img, 4).unwrap();
        assert_eq!(tensor_to_tile(&t, 4).unwrap(), img);
    }

    #[test]
    fn nearest_upsample() {
        let t = Tensor::new(&[1, 3, 1, 1], vec![1.0, 0.0, -1.0]).unwrap();
        let img = tensor_to_tile(&t, 3).unwrap();
        assert!(img.pixels().all(|p| p == [255, 128, 0]));
        assert!(tensor_to_tile(&t, 0).is_err());
    }
}

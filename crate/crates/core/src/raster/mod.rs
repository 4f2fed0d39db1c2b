//! Deterministic rasterization of vector layers into input/target tile pairs.
//!
//! No anti-aliasing: a pixel is inked for a stroke when its center lies within
//! half the stroke width of the polyline (ties ink), and polygons are filled
//! with the even-odd rule evaluated at pixel centers. All geometry is placed in
//! global pixel coordinates of the zoom level, so a tile rendered on its own is
//! bit-identical to the matching crop of a larger render.

mod dataset;
mod mask;
mod palette;
mod render;

pub use dataset::{build_dataset, DatasetManifest, DatasetOptions, ManifestTile, Split, MANIFEST_FILE};
pub use mask::{binarize, luminance, Mask};
pub use palette::{InputStyle, StylePalette};
pub use render::{render_input_tile, render_target_tile, PixelWindow, ProjectedLayers};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid palette: {0}")]
    Palette(String),
    #[error("invalid dataset option: {0}")]
    Options(String),
    #[error(transparent)]
    Tiling(#[from] crate::tiling::TilingError),
    #[error(transparent)]
    Image(#[from] crate::image::ImageError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(
        "empty dataset: none of the {covering} tiles at zoom {zoom} reached min_building_px={min_building_px}"
    )]
    EmptyDataset { covering: usize, zoom: u8, min_building_px: usize },
    #[error("input layers have no extent to rasterize")]
    NoExtent,
    #[error("manifest error in {path}: {message}")]
    Manifest { path: String, message: String },
}

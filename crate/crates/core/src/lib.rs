//! Vector-to-raster tile pipeline: geodata ingestion, slippy-map tiling,
//! deterministic rasterization, mosaics and evaluation metrics.

pub mod geodata;
pub mod image;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod stitch;
pub mod tiling;
pub mod xyz;

pub use geodata::{BBox, GeoPoint, VectorLayerSet};
pub use image::RasterTile;
pub use tiling::TileId;

//! Slippy-map (XYZ) tile arithmetic in Web Mercator (EPSG:3857).
//!
//! Tiles follow the XYZ convention: `y` grows southward. Tile intervals are
//! half-open, so a point exactly on a tile's east or south edge belongs to the
//! neighbouring tile.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::{BBox, GeoPoint};

/// WGS84 semi-major axis used by Web Mercator, in meters.
pub const EARTH_RADIUS: f64 = 6_378_137.0;
/// Half the side of the square Mercator world, in meters.
pub const MERCATOR_HALF_EXTENT: f64 = PI * EARTH_RADIUS;
/// Equatorial circumference used for ground widths.
pub const EQUATOR_CIRCUMFERENCE: f64 = 40_075_016.686;
/// Latitude at which the Mercator world becomes square.
pub const MAX_LATITUDE: f64 = 85.051_128_779_806_59;
pub const MAX_ZOOM: u8 = 22;
pub const DEFAULT_TILE_PX: u32 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TilingError {
    #[error("latitude {0} outside the Web Mercator band (|lat| < {MAX_LATITUDE})")]
    LatitudeOutOfBand(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("zoom {0} outside [0, {MAX_ZOOM}]")]
    InvalidZoom(u8),
    #[error("tile {z}/{x}/{y} outside the {n}x{n} grid", n = 1u64 << z)]
    InvalidTile { z: u8, x: u64, y: u64 },
    #[error("cannot parse tile address {0:?}")]
    Parse(String),
}

/// Slippy-map tile address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileId {
    pub z: u8,
    pub x: u64,
    pub y: u64,
}

impl TileId {
    pub fn new(z: u8, x: u64, y: u64) -> Result<Self, TilingError> {
        if z > MAX_ZOOM {
            return Err(TilingError::InvalidZoom(z));
        }
        let n = 1u64 << z;
        if x >= n || y >= n {
            return Err(TilingError::InvalidTile { z, x, y });
        }
        Ok(Self { z, x, y })
    }

    /// Number of tiles along one axis at this tile's zoom.
    pub fn grid_size(&self) -> u64 {
        1u64 << self.z
    }

    /// Row-major sort key (z, y, x).
    pub fn row_major_key(&self) -> (u8, u64, u64) {
        (self.z, self.y, self.x)
    }

    /// Relative path `{z}/{x}/{y}.png`.
    pub fn relative_path(&self) -> std::path::PathBuf {
        std::path::PathBuf::from(self.z.to_string())
            .join(self.x.to_string())
            .join(format!("{}.png", self.y))
    }
}

impl fmt::Display for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.z, self.x, self.y)
    }
}

impl std::str::FromStr for TileId {
    type Err = TilingError;

    /// Parses `z/x/y`, optionally with a trailing `.png`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TilingError::Parse(s.to_string());
        let trimmed = s.trim().trim_end_matches(".png");
        let mut parts = trimmed.split('/');
        let (Some(z), Some(x), Some(y), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(err());
        };
        let z = z.parse().map_err(|_| err())?;
        let x = x.parse().map_err(|_| err())?;
        let y = y.parse().map_err(|_| err())?;
        TileId::new(z, x, y)
    }
}

/// Geographic and projected extent of a tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileBounds {
    pub west: f64,
    pub east: f64,
    pub north: f64,
    pub south: f64,
    pub merc_min_x: f64,
    pub merc_min_y: f64,
    pub merc_max_x: f64,
    pub merc_max_y: f64,
}

impl TileBounds {
    /// Geographic center, taken at the Mercator midpoint.
    pub fn center(&self) -> GeoPoint {
        let mx = 0.5 * (self.merc_min_x + self.merc_max_x);
        let my = 0.5 * (self.merc_min_y + self.merc_max_y);
        let (lon, lat) = mercator_to_lonlat(mx, my);
        GeoPoint { lon, lat }
    }

    pub fn as_bbox(&self) -> BBox {
        BBox {
            min_lon: self.west,
            min_lat: self.south,
            max_lon: self.east,
            max_lat: self.north,
        }
    }
}

fn check_zoom(z: u8) -> Result<(), TilingError> {
    if z > MAX_ZOOM {
        Err(TilingError::InvalidZoom(z))
    } else {
        Ok(())
    }
}

fn check_point(p: GeoPoint) -> Result<(), TilingError> {
    if !(p.lat.abs() < MAX_LATITUDE) {
        return Err(TilingError::LatitudeOutOfBand(p.lat));
    }
    if !(-180.0..=180.0).contains(&p.lon) {
        return Err(TilingError::LongitudeOutOfRange(p.lon));
    }
    Ok(())
}

/// Projects WGS84 degrees to Web Mercator meters.
pub fn lonlat_to_mercator(lon: f64, lat: f64) -> (f64, f64) {
    let x = EARTH_RADIUS * lon.to_radians();
    let y = EARTH_RADIUS * lat.to_radians().tan().asinh();
    (x, y)
}

/// Inverse of [`lonlat_to_mercator`].
pub fn mercator_to_lonlat(x: f64, y: f64) -> (f64, f64) {
    let lon = (x / EARTH_RADIUS).to_degrees();
    let lat = (y / EARTH_RADIUS).sinh().atan().to_degrees();
    (lon, lat)
}

fn fractional_tile(lon: f64, lat: f64, z: u8) -> (f64, f64) {
    let n = (1u64 << z) as f64;
    let fx = (lon + 180.0) / 360.0 * n;
    let fy = (1.0 - lat.to_radians().tan().asinh() / PI) / 2.0 * n;
    (fx, fy)
}

fn clamp_index(f: f64, z: u8) -> u64 {
    let max = (1u64 << z) - 1;
    if f <= 0.0 {
        0
    } else {
        (f.floor() as u64).min(max)
    }
}

/// Tile containing `p` at zoom `z`.
pub fn lonlat_to_tile(p: GeoPoint, z: u8) -> Result<TileId, TilingError> {
    check_zoom(z)?;
    check_point(p)?;
    let (fx, fy) = fractional_tile(p.lon, p.lat, z);
    Ok(TileId {
        z,
        x: clamp_index(fx, z),
        y: clamp_index(fy, z),
    })
}

fn tile_lon(x: u64, z: u8) -> f64 {
    x as f64 / (1u64 << z) as f64 * 360.0 - 180.0
}

fn tile_lat(y: u64, z: u8) -> f64 {
    let n = (1u64 << z) as f64;
    (PI * (1.0 - 2.0 * y as f64 / n)).sinh().atan().to_degrees()
}

/// Side of a tile in Mercator meters.
pub fn tile_span_mercator(z: u8) -> f64 {
    2.0 * MERCATOR_HALF_EXTENT / (1u64 << z) as f64
}

/// Bounds of a tile. Edges are computed from the integer index alone, so
/// neighbouring tiles share edge coordinates bit-for-bit.
pub fn tile_to_bounds(t: TileId) -> TileBounds {
    let span = tile_span_mercator(t.z);
    TileBounds {
        west: tile_lon(t.x, t.z),
        east: tile_lon(t.x + 1, t.z),
        north: tile_lat(t.y, t.z),
        south: tile_lat(t.y + 1, t.z),
        merc_min_x: -MERCATOR_HALF_EXTENT + t.x as f64 * span,
        merc_max_x: -MERCATOR_HALF_EXTENT + (t.x + 1) as f64 * span,
        merc_max_y: MERCATOR_HALF_EXTENT - t.y as f64 * span,
        merc_min_y: MERCATOR_HALF_EXTENT - (t.y + 1) as f64 * span,
    }
}

/// Ground width of a tile at latitude `lat`, in meters.
pub fn tile_width_meters(z: u8, lat: f64) -> Result<f64, TilingError> {
    check_zoom(z)?;
    if !(lat.abs() < MAX_LATITUDE) {
        return Err(TilingError::LatitudeOutOfBand(lat));
    }
    Ok(EQUATOR_CIRCUMFERENCE * lat.to_radians().cos() / (1u64 << z) as f64)
}

/// All tiles at zoom `z` whose (half-open) extent intersects the closed
/// bbox, in row-major order (y, then x). A degenerate bbox yields the single
/// tile containing it.
pub fn tiles_covering_bbox(bbox: &BBox, z: u8) -> Result<Vec<TileId>, TilingError> {
    check_zoom(z)?;
    let nw = GeoPoint {
        lon: bbox.min_lon,
        lat: bbox.max_lat.min(MAX_LATITUDE - 1e-9),
    };
    let se = GeoPoint {
        lon: bbox.max_lon,
        lat: bbox.min_lat.max(-MAX_LATITUDE + 1e-9),
    };
    let a = lonlat_to_tile(nw, z)?;
    let b = lonlat_to_tile(se, z)?;
    let mut out = Vec::with_capacity(((b.x - a.x + 1) * (b.y - a.y + 1)) as usize);
    for y in a.y..=b.y {
        for x in a.x..=b.x {
            out.push(TileId { z, x, y });
        }
    }
    Ok(out)
}

/// Global pixel coordinates at zoom `z` for a `tile_px`-sized tile grid.
/// Linear in Mercator meters; (0, 0) is the north-west corner of the world.
pub fn lonlat_to_global_pixel(p: GeoPoint, z: u8, tile_px: u32) -> (f64, f64) {
    let (mx, my) = lonlat_to_mercator(p.lon, p.lat);
    mercator_to_global_pixel(mx, my, z, tile_px)
}

pub fn mercator_to_global_pixel(mx: f64, my: f64, z: u8, tile_px: u32) -> (f64, f64) {
    let world_px = (1u64 << z) as f64 * tile_px as f64;
    let scale = world_px / (2.0 * MERCATOR_HALF_EXTENT);
    ((mx + MERCATOR_HALF_EXTENT) * scale, (MERCATOR_HALF_EXTENT - my) * scale)
}

pub fn global_pixel_to_mercator(px: f64, py: f64, z: u8, tile_px: u32) -> (f64, f64) {
    let world_px = (1u64 << z) as f64 * tile_px as f64;
    let scale = (2.0 * MERCATOR_HALF_EXTENT) / world_px;
    (px * scale - MERCATOR_HALF_EXTENT, MERCATOR_HALF_EXTENT - py * scale)
}

/// Pixel position of `p` inside tile `t`: the tile's north-west corner maps to
/// (0, 0) and its south-east corner to (tile_px, tile_px). Points outside the
/// tile map outside that square.
pub fn lonlat_to_pixel(p: GeoPoint, t: TileId, tile_px: u32) -> (f64, f64) {
    let (gx, gy) = lonlat_to_global_pixel(p, t.z, tile_px);
    let ox = t.x as f64 * tile_px as f64;
    let oy = t.y as f64 * tile_px as f64;
    (gx - ox, gy - oy)
}

/// Inverse of [`lonlat_to_pixel`], returning Mercator meters.
pub fn pixel_to_mercator(px: f64, py: f64, t: TileId, tile_px: u32) -> (f64, f64) {
    let ox = t.x as f64 * tile_px as f64;
    let oy = t.y as f64 * tile_px as f64;
    global_pixel_to_mercator(px + ox, py + oy, t.z, tile_px)
}

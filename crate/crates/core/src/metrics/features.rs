use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use super::MetricsError;
use crate::image::RasterTile;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureExtractorSpec {
    /// Luminance box-averaged to a k x k grid, scaled to [0, 1]. d = k².
    DownsampleGray { k: usize },
    /// Per grid cell and RGB channel: (mean, stddev). d = 2·g²·3.
    PatchMoments { g: usize },
    /// Precomputed features read from a file.
    External { path: PathBuf },
}

impl Default for FeatureExtractorSpec {
    fn default() -> Self {
        Self::DownsampleGray { k: 8 }
    }
}

impl FeatureExtractorSpec {
    /// Feature dimension, when the extractor alone determines it.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::DownsampleGray { k } => Some(k * k),
            Self::PatchMoments { g } => Some(2 * g * g * 3),
            Self::External { .. } => None,
        }
    }

    fn validate(&self) -> Result<(), MetricsError> {
        match self.dim() {
            Some(d) if d < 2 => Err(MetricsError::Extractor(format!("{self} yields d = {d}, need at least 2"))),
            _ => Ok(()),
        }
    }

    /// Parses `gray:8`, `moments:2` or `external:/path`.
    pub fn parse(s: &str) -> Result<Self, MetricsError> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let num = |default: usize| -> Result<usize, MetricsError> {
            if arg.is_empty() {
                Ok(default)
            } else {
                arg.parse().map_err(|_| MetricsError::Extractor(format!("bad size in '{s}'")))
            }
        };
        let spec = match kind {
            "gray" | "downsample_gray" => Self::DownsampleGray { k: num(8)? },
            "moments" | "patch_moments" => Self::PatchMoments { g: num(1)? },
            "external" if !arg.is_empty() => Self::External { path: PathBuf::from(arg) },
            _ => return Err(MetricsError::Extractor(format!("unknown extractor '{s}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for FeatureExtractorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DownsampleGray { k } => write!(f, "gray:{k}"),
            Self::PatchMoments { g } => write!(f, "moments:{g}"),
            Self::External { path } => write!(f, "external:{}", path.display()),
        }
    }
}

fn cell_range(i: usize, cells: usize, len: usize) -> std::ops::Range<usize> {
    (i * len / cells)..((i + 1) * len / cells)
}

fn downsample_gray(tile: &RasterTile, k: usize) -> Vec<f64> {
    let (w, h) = (tile.width() as usize, tile.height() as usize);
    let data = tile.data();
    let mut out = Vec::with_capacity(k * k);
    for cy in 0..k {
        for cx in 0..k {
            let mut sum = 0u64;
            let mut count = 0u64;
            for y in cell_range(cy, k, h) {
                for x in cell_range(cx, k, w) {
                    let p = &data[(y * w + x) * 3..(y * w + x) * 3 + 3];
                    sum += 299 * p[0] as u64 + 587 * p[1] as u64 + 114 * p[2] as u64;
                    count += 1;
                }
            }
            out.push(if count == 0 { 0.0 } else { sum as f64 / (count as f64 * 255_000.0) });
        }
    }
    out
}

fn patch_moments(tile: &RasterTile, g: usize) -> Vec<f64> {
    let (w, h) = (tile.width() as usize, tile.height() as usize);
    let data = tile.data();
    let mut out = Vec::with_capacity(6 * g * g);
    for cy in 0..g {
        for cx in 0..g {
            let mut sum = [0u64; 3];
            let mut sq = [0u64; 3];
            let mut count = 0u64;
            for y in cell_range(cy, g, h) {
                for x in cell_range(cx, g, w) {
                    for c in 0..3 {
                        let v = data[(y * w + x) * 3 + c] as u64;
                        sum[c] += v;
                        sq[c] += v * v;
                    }
                    count += 1;
                }
            }
            for c in 0..3 {
                if count == 0 {
                    out.extend([0.0, 0.0]);
                    continue;
                }
                let n = count as f64;
                let mean = sum[c] as f64 / n;
                // Integer numerator keeps the variance exact for 8-bit data.
                let var_num = (count as i128 * sq[c] as i128 - sum[c] as i128 * sum[c] as i128) as f64;
                out.extend([mean, (var_num / (n * n)).max(0.0).sqrt()]);
            }
        }
    }
    out
}

/// n x d feature matrix for a tile population.
pub fn extract_features(tiles: &[RasterTile], spec: &FeatureExtractorSpec) -> Result<Matrix, MetricsError> {
    spec.validate()?;
    if let FeatureExtractorSpec::External { path } = spec {
        let m = read_feature_file(path)?;
        if m.rows() < 2 {
            return Err(MetricsError::TooFewSamples(m.rows()));
        }
        return Ok(m);
    }
    if tiles.len() < 2 {
        return Err(MetricsError::TooFewSamples(tiles.len()));
    }
    let size = (tiles[0].width(), tiles[0].height());
    if let Some(bad) = tiles.iter().position(|t| (t.width(), t.height()) != size) {
        return Err(MetricsError::Dimension(format!("tile {bad} differs in size from tile 0")));
    }
    let rows: Vec<Vec<f64>> = tiles
        .par_iter()
        .map(|t| match spec {
            FeatureExtractorSpec::DownsampleGray { k } => downsample_gray(t, *k),
            FeatureExtractorSpec::PatchMoments { g } => patch_moments(t, *g),
            FeatureExtractorSpec::External { .. } => unreachable!(),
        })
        .collect();
    let d = rows[0].len();
    Ok(Matrix::from_rows(rows.len(), d, rows.concat()))
}

pub const FEATURE_MAGIC: &[u8; 4] = b"TSFT";
pub const FEATURE_VERSION: u32 = 1;

/// Binary layout: magic, u32 version, u64 n, u64 d, then n·d little-endian f32, row-major.
pub fn write_feature_file(path: &Path, features: &Matrix) -> Result<(), MetricsError> {
    let io = |e| MetricsError::Io { path: path.to_path_buf(), source: e };
    let mut buf = Vec::with_capacity(24 + features.as_slice().len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(features.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(features.cols() as u64).to_le_bytes());
    for v in features.as_slice() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)
}

/// Reads the binary format above, or CSV with one row per sample.
pub fn read_feature_file(path: &Path) -> Result<Matrix, MetricsError> {
    let bytes = std::fs::read(path).map_err(|e| MetricsError::Io { path: path.to_path_buf(), source: e })?;
    let bad = |msg: String| MetricsError::FeatureFile { path: path.to_path_buf(), message: msg };
    if bytes.starts_with(FEATURE_MAGIC) {
        if bytes.len() < 24 {
            return Err(bad("truncated header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FEATURE_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let d = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let expected = n.checked_mul(d).and_then(|v| v.checked_mul(4)).and_then(|v| v.checked_add(24));
        if expected != Some(bytes.len()) {
            return Err(bad(format!("payload does not match header n={n} d={d}")));
        }
        let data = bytes[24..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        return Ok(Matrix::from_rows(n, d, data));
    }
    let text = String::from_utf8(bytes).map_err(|_| bad("neither binary features nor UTF-8 CSV".into()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(bad(format!("line {} has {} columns, expected {}", lineno + 1, row.len(), first.len())));
                    }
                }
                rows.push(row);
            }
            // A single header line is tolerated.
            Err(_) if rows.is_empty() && lineno == 0 => continue,
            Err(_) => return Err(bad(format!("line {} is not numeric", lineno + 1))),
        }
    }
    let d = rows.first().map_or(0, Vec::len);
    Ok(Matrix::from_rows(rows.len(), d, rows.concat()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::RgbImage;

    fn checker(size: u32) -> RgbImage {
        let mut img = RgbImage::filled(size, size, [255, 255, 255]);
        for y in 0..size {
            for x in 0..size {
                if (x + y) % 2 == 0 {
                    img.put(x, y, [0, 0, 0]);
                }
            }
        }
        img
    }

    #[test]
    fn constant_tiles() {
        let white = vec![RgbImage::filled(64, 64, [255, 255, 255]); 3];
        let f = extract_features(&white, &FeatureExtractorSpec::default()).unwrap();
        assert_eq!((f.rows(), f.cols()), (3, 64));
        assert!(f.as_slice().iter().all(|v| *v == 1.0));
        let black = vec![RgbImage::filled(64, 64, [0, 0, 0]); 2];
        let f = extract_features(&black, &FeatureExtractorSpec::default()).unwrap();
        assert!(f.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn checkerboard_moments() {
        let tiles = vec![checker(16), checker(16)];
        let f = extract_features(&tiles, &FeatureExtractorSpec::PatchMoments { g: 1 }).unwrap();
        // Brute force: half the pixels 0, half 255.
        let px: Vec<f64> = (0..256).map(|i| if ((i % 16) + i / 16) % 2 == 0 { 0.0 } else { 255.0 }).collect();
        let mean = px.iter().sum::<f64>() / 256.0;
        let sd = (px.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 256.0).sqrt();
        assert_eq!(f.row(0), &[mean, sd, mean, sd, mean, sd]);
        assert_eq!(mean, 127.5);
    }

    #[test]
    fn needs_two_tiles() {
        let one = vec![RgbImage::filled(8, 8, [0, 0, 0])];
        assert!(matches!(extract_features(&one, &FeatureExtractorSpec::default()), Err(MetricsError::TooFewSamples(1))));
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(FeatureExtractorSpec::parse("gray").unwrap(), FeatureExtractorSpec::DownsampleGray { k: 8 });
        assert_eq!(FeatureExtractorSpec::parse("moments:2").unwrap().dim(), Some(24));
        assert!(FeatureExtractorSpec::parse("gray:1").is_err());
        assert!(FeatureExtractorSpec::parse("inception").is_err());
        let s = FeatureExtractorSpec::PatchMoments { g: 3 };
        assert_eq!(FeatureExtractorSpec::parse(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn feature_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Matrix::from_rows(3, 2, vec![0.5, 1.0, -2.0, 3.25, 0.0, 8.0]);
        let bin = dir.path().join("f.bin");
        write_feature_file(&bin, &m).unwrap();
        assert_eq!(read_feature_file(&bin).unwrap(), m);
        let csv = dir.path().join("f.csv");
        std::fs::write(&csv, "a,b\n0.5,1\n-2,3.25\n0,8\n").unwrap();
        assert_eq!(read_feature_file(&csv).unwrap(), m);
        std::fs::write(&csv, "1,2\n3\n").unwrap();
        assert!(read_feature_file(&csv).is_err());
    }
}

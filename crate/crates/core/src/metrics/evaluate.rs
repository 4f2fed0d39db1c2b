use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, read_feature_file, FeatureExtractorSpec};
use super::iou::{miou, TileIou};
use super::stats::{fit_stats, frechet_distance_with, FrechetOptions};
use super::MetricsError;
use crate::image::load_tile;
use crate::raster::binarize;
use crate::tiling::TileId;
use crate::xyz::list_tiles;

/// Default luminance threshold separating building ink from roads and background.
pub const DEFAULT_THRESHOLD: u8 = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fid: f64,
    pub fid_regularized: bool,
    pub miou: f64,
    pub extractor: FeatureExtractorSpec,
    pub generated_tiles: usize,
    pub truth_tiles: usize,
    pub threshold: u8,
    pub per_tile: Vec<TileIou>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "extractor        {}", self.extractor);
        let _ = writeln!(s, "tiles            {} generated / {} truth", self.generated_tiles, self.truth_tiles);
        let _ = writeln!(s, "threshold        {}", self.threshold);
        let _ = writeln!(s, "fid              {:.6}{}", self.fid, if self.fid_regularized { " (regularized)" } else { "" });
        let _ = writeln!(s, "miou             {:.6}", self.miou);
        if let (Some(lo), Some(hi)) = (
            self.per_tile.iter().min_by(|a, b| a.iou.total_cmp(&b.iou)),
            self.per_tile.iter().max_by(|a, b| a.iou.total_cmp(&b.iou)),
        ) {
            let _ = writeln!(s, "worst tile       {} ({:.4})", lo.tile, lo.iou);
            let _ = writeln!(s, "best tile        {} ({:.4})", hi.tile, hi.iou);
        }
        s
    }

    /// Writes `report.json` and `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), MetricsError> {
        std::fs::create_dir_all(dir).map_err(|e| MetricsError::Io { path: dir.to_path_buf(), source: e })?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        let p = dir.join("report.json");
        std::fs::write(&p, json).map_err(|e| MetricsError::Io { path: p.clone(), source: e })?;
        let p = dir.join("summary.txt");
        std::fs::write(&p, self.summary()).map_err(|e| MetricsError::Io { path: p.clone(), source: e })
    }
}

fn collect(dir: &Path, only: Option<&BTreeSet<TileId>>) -> Result<Vec<(TileId, PathBuf)>, MetricsError> {
    let tiles: Vec<_> = list_tiles(dir).into_iter().filter(|(t, _)| only.is_none_or(|s| s.contains(t))).collect();
    if tiles.is_empty() {
        return Err(MetricsError::EmptyDirectory(dir.to_path_buf()));
    }
    Ok(tiles)
}

fn external_file(dir: &Path, stem: &str) -> Result<PathBuf, MetricsError> {
    ["bin", "feat", "csv"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| MetricsError::FeatureFile {
            path: dir.to_path_buf(),
            message: format!("no {stem}.bin, {stem}.feat or {stem}.csv"),
        })
}

/// Compares a generated tile tree against ground truth. `only` restricts
/// both trees to the listed addresses (for instance a manifest split).
///
/// With an external extractor, `path` is a directory holding
/// `generated.{bin,csv}` and `truth.{bin,csv}`.
pub fn evaluate(
    generated_dir: &Path,
    truth_dir: &Path,
    spec: &FeatureExtractorSpec,
    threshold: u8,
    only: Option<&[TileId]>,
) -> Result<EvalReport, MetricsError> {
    let only: Option<BTreeSet<TileId>> = only.map(|s| s.iter().copied().collect());
    let gen = collect(generated_dir, only.as_ref())?;
    let truth = collect(truth_dir, only.as_ref())?;

    let load = |list: &[(TileId, PathBuf)]| -> Result<Vec<_>, MetricsError> {
        list.par_iter()
            .map(|(t, p)| load_tile(p).map(|img| (*t, img)).map_err(|e| MetricsError::Image { path: p.clone(), message: e.to_string() }))
            .collect()
    };
    let gen_tiles = load(&gen)?;
    let truth_tiles = load(&truth)?;

    let (fg, ft) = match spec {
        FeatureExtractorSpec::External { path } => {
            let fg = read_feature_file(&external_file(path, "generated")?)?;
            let ft = read_feature_file(&external_file(path, "truth")?)?;
            if fg.cols() != ft.cols() {
                return Err(MetricsError::Dimension(format!("external features d={} and d={}", fg.cols(), ft.cols())));
            }
            (fg, ft)
        }
        _ => {
            let imgs = |v: &[(TileId, crate::image::RasterTile)]| v.iter().map(|(_, i)| i.clone()).collect::<Vec<_>>();
            (extract_features(&imgs(&gen_tiles), spec)?, extract_features(&imgs(&truth_tiles), spec)?)
        }
    };
    let fid = frechet_distance_with(&fit_stats(&fg)?, &fit_stats(&ft)?, FrechetOptions::default())?;

    let masks = |v: &[(TileId, crate::image::RasterTile)]| v.par_iter().map(|(t, i)| (*t, binarize(i, threshold))).collect::<Vec<_>>();
    let m = miou(&masks(&gen_tiles), &masks(&truth_tiles))?;

    let report = EvalReport {
        fid: fid.distance,
        fid_regularized: fid.regularized,
        miou: m.miou,
        extractor: spec.clone(),
        generated_tiles: gen_tiles.len(),
        truth_tiles: truth_tiles.len(),
        threshold,
        per_tile: m.per_tile,
    };
    if !report.fid.is_finite() || !report.miou.is_finite() {
        return Err(MetricsError::NonFinite("evaluation report".into()));
    }
    log::info!(
        "metric=evaluate tiles={} fid={:.6} miou={:.6} extractor={}",
        report.generated_tiles,
        report.fid,
        report.miou,
        report.extractor
    );
    Ok(report)
}

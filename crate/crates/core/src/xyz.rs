//! Reading `{root}/{z}/{x}/{y}.png` tile trees.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use crate::tiling::TileId;

/// Every well-formed tile file under `root`, sorted row-major per zoom.
/// Files that do not parse as a valid tile address are ignored.
pub fn list_tiles(root: &Path) -> Vec<(TileId, PathBuf)> {
    let mut tiles = BTreeMap::new();
    for entry in WalkDir::new(root).min_depth(3).max_depth(3).into_iter().filter_map(Result::ok) {
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(root) else { continue };
        let rel: Vec<_> = rel.iter().filter_map(|c| c.to_str()).collect();
        if rel.len() != 3 || !rel[2].ends_with(".png") {
            continue;
        }
        if let Ok(t) = format!("{}/{}/{}", rel[0], rel[1], rel[2]).parse::<TileId>() {
            tiles.insert(t.row_major_key(), (t, entry.path().to_path_buf()));
        }
    }
    tiles.into_values().collect()
}

pub fn tile_path(root: &Path, t: TileId) -> PathBuf {
    root.join(t.relative_path())
}

use std::collections::BTreeSet;

use tilesynth_core::geodata::synth_grid_city;
use tilesynth_core::image::RgbImage;
use tilesynth_core::metrics::miou;
use tilesynth_core::raster::{binarize, render_target_tile, StylePalette};
use tilesynth_core::stitch::*;
use tilesynth_core::tiling::{tile_span_mercator, tile_to_bounds, TileId};
use tilesynth_core::xyz::tile_path;

fn write_region(root: &std::path::Path, tiles: &[TileId]) {
    let city = synth_grid_city(10, 10, 2);
    let palette = StylePalette::default();
    for t in tiles {
        render_target_tile(&city, *t, &palette).save_png(&tile_path(root, *t)).unwrap();
    }
}

fn region_5x5() -> Vec<TileId> {
    let base = tilesynth_core::tiling::lonlat_to_tile(tilesynth_core::geodata::FIXTURE_ORIGIN, 17).unwrap();
    (0..5).flat_map(|dy| (0..5).map(move |dx| TileId::new(17, base.x + dx, base.y - 4 + dy).unwrap())).collect()
}

#[test]
fn missing_tiles_become_nodata_and_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let all = region_5x5();
    let gone: BTreeSet<TileId> = [all[3], all[12], all[24]].into_iter().collect();
    let present: Vec<_> = all.iter().copied().filter(|t| !gone.contains(t)).collect();
    write_region(dir.path(), &present);
    let r = stitch(dir.path(), 17, &Region::Tiles(all.clone())).unwrap();
    assert_eq!(r.missing.iter().copied().collect::<BTreeSet<_>>(), gone);
    assert_eq!((r.mosaic.image.width(), r.mosaic.image.height()), (5 * 256, 5 * 256));
    for t in &all {
        let (ox, oy) = r.mosaic.offset_of(*t).unwrap();
        let crop = r.mosaic.image.crop(ox, oy, 256, 256);
        if gone.contains(t) {
            assert_eq!(crop, RgbImage::filled(256, 256, NODATA_COLOR));
        } else {
            assert_eq!(crop, tilesynth_core::image::load_tile(&tile_path(dir.path(), *t)).unwrap());
        }
    }
    let out = dir.path().join("out/mosaic.png");
    r.save(&out).unwrap();
    let listed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/mosaic.missing.json")).unwrap()).unwrap();
    assert_eq!(listed["missing"].as_array().unwrap().len(), 3);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/mosaic.pgw")).unwrap().lines().count(), 6);
}

#[test]
fn visit_order_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let all = region_5x5();
    write_region(dir.path(), &all);
    let a = stitch(dir.path(), 17, &Region::Tiles(all.clone())).unwrap();
    let mut rev = all.clone();
    rev.reverse();
    let b = stitch(dir.path(), 17, &Region::Tiles(rev)).unwrap();
    assert_eq!(a, b);
    let origin = tile_to_bounds(all[0]);
    assert_eq!(a.mosaic.geotransform.origin_x, origin.merc_min_x);
    assert_eq!(a.mosaic.geotransform.origin_y, origin.merc_max_y);
    assert_eq!(a.mosaic.geotransform.pixel_size, tile_span_mercator(17) / 256.0);
}

#[test]
fn bbox_region_matches_tile_list() {
    let dir = tempfile::tempdir().unwrap();
    let all = region_5x5();
    write_region(dir.path(), &all);
    let b = tile_to_bounds(all[6]);
    let inner = tilesynth_core::geodata::BBox { min_lon: b.west + 1e-7, min_lat: b.south + 1e-7, max_lon: b.east - 1e-7, max_lat: b.north - 1e-7 };
    let r = stitch(dir.path(), 17, &Region::BBox(inner)).unwrap();
    assert_eq!((r.mosaic.cols, r.mosaic.rows), (1, 1));
    assert_eq!(r.mosaic.image, tilesynth_core::image::load_tile(&tile_path(dir.path(), all[6])).unwrap());
}

#[test]
fn mosaic_iou_agrees_with_pixel_counts_over_tiles() {
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let tiles = &region_5x5()[..10];
    write_region(da.path(), tiles);
    let other = synth_grid_city(10, 10, 3);
    for t in tiles {
        render_target_tile(&other, *t, &StylePalette::default()).save_png(&tile_path(db.path(), *t)).unwrap();
    }
    let a = stitch(da.path(), 17, &Region::Tiles(tiles.to_vec())).unwrap().mosaic;
    let b = stitch(db.path(), 17, &Region::Tiles(tiles.to_vec())).unwrap().mosaic;
    let c = compare_mosaics(&a, &b, 85).unwrap();
    let masks = |m: &Mosaic| -> Vec<_> {
        tiles.iter().map(|t| {
            let (ox, oy) = m.offset_of(*t).unwrap();
            (*t, binarize(&m.image.crop(ox, oy, 256, 256), 85))
        }).collect()
    };
    let per = miou(&masks(&a), &masks(&b)).unwrap();
    let inter: u64 = per.per_tile.iter().map(|p| p.intersection).sum();
    let union: u64 = per.per_tile.iter().map(|p| p.union).sum();
    assert_eq!((c.intersection, c.union), (inter, union));
    assert!(c.iou > 0.0 && c.iou < 1.0);
    assert_eq!(c.diff.count_color(DIFF_ONLY_A) as u64 + c.diff.count_color(DIFF_ONLY_B) as u64, union - inter);
}

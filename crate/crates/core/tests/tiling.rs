use proptest::prelude::*;
use tilesynth_core::geodata::{synth_grid_city, BBox, GeoPoint};
use tilesynth_core::rng::SplitMix64;
use tilesynth_core::tiling::*;

/// Every tile in a padded index window whose half-open bounds meet the bbox.
fn brute_force_cover(b: &BBox, z: u8) -> Vec<TileId> {
    let n = 1u64 << z;
    let a = lonlat_to_tile(GeoPoint::new(b.min_lon, b.max_lat), z).unwrap();
    let c = lonlat_to_tile(GeoPoint::new(b.max_lon, b.min_lat), z).unwrap();
    let mut out = Vec::new();
    for y in a.y.saturating_sub(2)..(c.y + 3).min(n) {
        for x in a.x.saturating_sub(2)..(c.x + 3).min(n) {
            let t = TileId::new(z, x, y).unwrap();
            let tb = tile_to_bounds(t);
            let (bx0, by0) = lonlat_to_mercator(b.min_lon, b.min_lat);
            let (bx1, by1) = lonlat_to_mercator(b.max_lon, b.max_lat);
            let x_hit = tb.merc_min_x <= bx1 && bx0 < tb.merc_max_x;
            let y_hit = tb.merc_min_y < by1 && by0 <= tb.merc_max_y;
            if x_hit && y_hit {
                out.push(t);
            }
        }
    }
    out
}

#[test]
fn fixture_bbox_cover_matches_brute_force() {
    let city = synth_grid_city(6, 5, 3);
    let b = city.bbox.unwrap();
    for z in 14..=17 {
        assert_eq!(tiles_covering_bbox(&b, z).unwrap(), brute_force_cover(&b, z), "z={z}");
    }
}

#[test]
fn two_by_two_block_minus_inset() {
    let nw = tile_to_bounds(TileId::new(15, 100, 200).unwrap());
    let se = tile_to_bounds(TileId::new(15, 101, 201).unwrap());
    let eps = 1e-9;
    let b = BBox { min_lon: nw.west + eps, min_lat: se.south + eps, max_lon: se.east - eps, max_lat: nw.north - eps };
    let got = tiles_covering_bbox(&b, 15).unwrap();
    let want: Vec<_> = [(100, 200), (101, 200), (100, 201), (101, 201)].iter().map(|&(x, y)| TileId::new(15, x, y).unwrap()).collect();
    assert_eq!(got, want);
}

#[test]
fn center_round_trip_thousand_tiles() {
    let mut rng = SplitMix64::new(20240917);
    for _ in 0..1000 {
        let z = 14 + rng.below(4) as u8;
        let n = 1u64 << z;
        let t = TileId::new(z, rng.below(n), rng.below(n)).unwrap();
        assert_eq!(lonlat_to_tile(tile_to_bounds(t).center(), z).unwrap(), t);
    }
}

#[test]
fn ground_widths() {
    assert_eq!(tile_width_meters(0, 0.0).unwrap(), 40075016.686);
    let w16 = tile_width_meters(16, 0.0).unwrap();
    assert!((w16 - 611.4962262878418).abs() <= 1e-9);
    // The commonly quoted "500 m" and "2,000 m" tile widths are loose roundings.
    assert!((w16 - 500.0).abs() > 100.0);
    assert!((tile_width_meters(14, 0.0).unwrap() - 2445.984905151367).abs() <= 1e-9);
}

#[test]
fn neighbouring_bounds_share_edges() {
    let a = tile_to_bounds(TileId::new(16, 51673, 32533).unwrap());
    let b = tile_to_bounds(TileId::new(16, 51674, 32533).unwrap());
    let c = tile_to_bounds(TileId::new(16, 51673, 32534).unwrap());
    assert_eq!(a.merc_max_x, b.merc_min_x);
    assert_eq!(a.merc_min_y, c.merc_max_y);
}

proptest! {
    #[test]
    fn cover_equals_brute_force(
        lon in -179.0f64..179.0, lat in -80.0f64..80.0,
        dlon in 0.0f64..0.2, dlat in 0.0f64..0.2, z in 8u8..16,
    ) {
        let b = BBox { min_lon: lon, min_lat: lat, max_lon: lon + dlon, max_lat: lat + dlat };
        prop_assert_eq!(tiles_covering_bbox(&b, z).unwrap(), brute_force_cover(&b, z));
    }

    #[test]
    fn pixel_mapping_is_affine(lon in 103.0f64..104.0, lat in 1.0f64..2.0) {
        let p = GeoPoint::new(lon, lat);
        let t = lonlat_to_tile(p, 16).unwrap();
        let (px, py) = lonlat_to_pixel(p, t, 256);
        prop_assert!((0.0..256.0).contains(&px) && (0.0..256.0).contains(&py));
        let (mx, my) = pixel_to_mercator(px, py, t, 256);
        let (ex, ey) = lonlat_to_mercator(lon, lat);
        prop_assert!((mx - ex).abs() < 1e-6 && (my - ey).abs() < 1e-6);
    }
}

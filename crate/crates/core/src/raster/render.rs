use crate::geodata::{GeoPoint, LandUseClass, RoadHierarchy, VectorLayerSet};
use crate::image::{RasterTile, Rgb, RgbImage};
use crate::tiling::{lonlat_to_global_pixel, TileId, DEFAULT_TILE_PX};

use super::palette::{InputStyle, StylePalette};

/// A rectangle of the global pixel grid at one zoom level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelWindow {
    pub z: u8,
    pub tile_px: u32,
    pub origin_x: i64,
    pub origin_y: i64,
    pub width: u32,
    pub height: u32,
}

impl PixelWindow {
    pub fn for_tile(t: TileId, tile_px: u32) -> Self {
        Self {
            z: t.z,
            tile_px,
            origin_x: t.x as i64 * tile_px as i64,
            origin_y: t.y as i64 * tile_px as i64,
            width: tile_px,
            height: tile_px,
        }
    }

    /// Window covering `cols` x `rows` tiles starting at `origin`.
    pub fn for_block(origin: TileId, cols: u32, rows: u32, tile_px: u32) -> Self {
        Self { width: cols * tile_px, height: rows * tile_px, ..Self::for_tile(origin, tile_px) }
    }

    #[inline]
    fn center_x(&self, i: i64) -> f64 {
        (self.origin_x + i) as f64 + 0.5
    }

    #[inline]
    fn center_y(&self, j: i64) -> f64 {
        (self.origin_y + j) as f64 + 0.5
    }

    /// Clamped local index range whose pixel centers may fall in [lo, hi].
    fn span(lo: f64, hi: f64, origin: i64, size: u32) -> Option<(i64, i64)> {
        let a = ((lo - origin as f64).floor() as i64 - 1).max(0);
        let b = ((hi - origin as f64).ceil() as i64 + 1).min(size as i64 - 1);
        (a <= b).then_some((a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Px {
    x: f64,
    y: f64,
}

#[derive(Debug, Clone, Copy)]
struct Extent {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
}

impl Extent {
    fn of(points: &[Px]) -> Self {
        points.iter().fold(
            Extent { min_x: f64::INFINITY, min_y: f64::INFINITY, max_x: f64::NEG_INFINITY, max_y: f64::NEG_INFINITY },
            |e, p| Extent { min_x: e.min_x.min(p.x), min_y: e.min_y.min(p.y), max_x: e.max_x.max(p.x), max_y: e.max_y.max(p.y) },
        )
    }
}

#[derive(Debug, Clone)]
struct ProjectedLine {
    points: Vec<Px>,
    hierarchy: RoadHierarchy,
}

#[derive(Debug, Clone)]
struct ProjectedPolygon {
    rings: Vec<Vec<Px>>,
    extent: Extent,
    class: Option<LandUseClass>,
}

/// Vector layers projected once into global pixel coordinates of a zoom level.
#[derive(Debug, Clone)]
pub struct ProjectedLayers {
    z: u8,
    tile_px: u32,
    roads: Vec<ProjectedLine>,
    buildings: Vec<ProjectedPolygon>,
    landuse: Vec<ProjectedPolygon>,
}

fn project(points: &[GeoPoint], z: u8, tile_px: u32) -> Vec<Px> {
    points
        .iter()
        .map(|p| {
            let (x, y) = lonlat_to_global_pixel(*p, z, tile_px);
            Px { x, y }
        })
        .collect()
}

impl ProjectedLayers {
    pub fn new(layers: &VectorLayerSet, z: u8, tile_px: u32) -> Self {
        let polygon = |rings: Vec<Vec<Px>>, class| {
            let extent = Extent::of(&rings[0]);
            ProjectedPolygon { rings, extent, class }
        };
        Self {
            z,
            tile_px,
            roads: layers
                .roads
                .iter()
                .map(|r| ProjectedLine { points: project(&r.points, z, tile_px), hierarchy: r.hierarchy })
                .collect(),
            buildings: layers
                .buildings
                .iter()
                .filter(|b| !b.exterior.is_empty())
                .map(|b| polygon(b.rings().map(|r| project(r, z, tile_px)).collect(), None))
                .collect(),
            landuse: layers
                .landuse
                .iter()
                .filter(|p| !p.exterior.is_empty())
                .map(|p| polygon(p.rings().map(|r| project(r, z, tile_px)).collect(), Some(p.class)))
                .collect(),
        }
    }

    pub fn zoom(&self) -> u8 {
        self.z
    }

    pub fn tile_px(&self) -> u32 {
        self.tile_px
    }
}

struct Canvas {
    window: PixelWindow,
    image: RgbImage,
}

impl Canvas {
    fn new(window: PixelWindow, background: Rgb) -> Self {
        Self { window, image: RgbImage::filled(window.width, window.height, background) }
    }

    /// Inks every pixel whose center lies within `half_width` of segment a-b.
    fn stroke_segment(&mut self, a: Px, b: Px, half_width: f64, color: Rgb) {
        let w = self.window;
        let Some((i0, i1)) = PixelWindow::span(a.x.min(b.x) - half_width, a.x.max(b.x) + half_width, w.origin_x, w.width)
        else {
            return;
        };
        let Some((j0, j1)) = PixelWindow::span(a.y.min(b.y) - half_width, a.y.max(b.y) + half_width, w.origin_y, w.height)
        else {
            return;
        };
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let limit = half_width * half_width;
        for j in j0..=j1 {
            let cy = w.center_y(j);
            for i in i0..=i1 {
                let cx = w.center_x(i);
                let (px, py) = (cx - a.x, cy - a.y);
                let t = if len2 > 0.0 { ((px * dx + py * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (ex, ey) = (px - t * dx, py - t * dy);
                if ex * ex + ey * ey <= limit {
                    self.image.put(i as u32, j as u32, color);
                }
            }
        }
    }

    fn stroke(&mut self, points: &[Px], width: f64, color: Rgb) {
        let half = width / 2.0;
        if points.len() == 1 {
            self.stroke_segment(points[0], points[0], half, color);
        }
        for seg in points.windows(2) {
            self.stroke_segment(seg[0], seg[1], half, color);
        }
    }

    /// Even-odd fill at pixel centers over all rings (each implicitly closed).
    fn fill(&mut self, polygon: &ProjectedPolygon, color: Rgb) {
        let w = self.window;
        let e = polygon.extent;
        let Some((i0, i1)) = PixelWindow::span(e.min_x, e.max_x, w.origin_x, w.width) else { return };
        let Some((j0, j1)) = PixelWindow::span(e.min_y, e.max_y, w.origin_y, w.height) else { return };
        let mut xs = Vec::new();
        for j in j0..=j1 {
            let cy = w.center_y(j);
            xs.clear();
            for ring in &polygon.rings {
                for (k, p0) in ring.iter().enumerate() {
                    let p1 = ring[(k + 1) % ring.len()];
                    if (p0.y > cy) != (p1.y > cy) {
                        xs.push(crossing_x(*p0, p1, cy));
                    }
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                let (lo, hi) = (pair[0], pair[1]);
                // Centers with lo <= cx < hi are inside.
                for i in i0..=i1 {
                    let cx = w.center_x(i);
                    if cx >= hi {
                        break;
                    }
                    if cx >= lo {
                        self.image.put(i as u32, j as u32, color);
                    }
                }
            }
        }
    }
}

/// X coordinate where edge p0-p1 crosses the horizontal line y = cy.
#[inline]
pub(crate) fn crossing_x(p0: impl Into<(f64, f64)>, p1: impl Into<(f64, f64)>, cy: f64) -> f64 {
    let (x0, y0) = p0.into();
    let (x1, y1) = p1.into();
    x0 + (cy - y0) * (x1 - x0) / (y1 - y0)
}

impl From<Px> for (f64, f64) {
    fn from(p: Px) -> Self {
        (p.x, p.y)
    }
}

fn draw_roads(canvas: &mut Canvas, layers: &ProjectedLayers, palette: &StylePalette, pick: impl Fn(RoadHierarchy) -> Option<Rgb>) {
    // Lower hierarchy first so major roads end up on top.
    for h in RoadHierarchy::ALL.iter().rev() {
        let Some(color) = pick(*h) else { continue };
        let width = palette.road_width(*h, layers.z);
        for road in layers.roads.iter().filter(|r| r.hierarchy == *h) {
            canvas.stroke(&road.points, width, color);
        }
    }
}

fn render_input(layers: &ProjectedLayers, window: PixelWindow, style: InputStyle, palette: &StylePalette) -> RgbImage {
    let mut canvas = Canvas::new(window, palette.background);
    match style {
        InputStyle::RoadsBW => draw_roads(&mut canvas, layers, palette, |_| Some(palette.bw_road_color)),
        InputStyle::RoadsCRHD => draw_roads(&mut canvas, layers, palette, |h| Some(palette.crhd_color(h))),
        InputStyle::LandUse => {
            for parcel in &layers.landuse {
                let class = parcel.class.unwrap_or(LandUseClass::Other);
                canvas.fill(parcel, palette.landuse_color(class));
            }
            draw_roads(&mut canvas, layers, palette, |h| {
                matches!(h, RoadHierarchy::Primary | RoadHierarchy::Secondary).then_some(palette.bw_road_color)
            });
        }
    }
    canvas.image
}

fn render_target(layers: &ProjectedLayers, window: PixelWindow, palette: &StylePalette) -> RgbImage {
    let mut canvas = Canvas::new(window, palette.background);
    draw_roads(&mut canvas, layers, palette, |_| Some(palette.target_road_color));
    for b in &layers.buildings {
        canvas.fill(b, palette.building_color);
    }
    canvas.image
}

impl ProjectedLayers {
    fn check_window(&self, window: &PixelWindow) {
        assert!(
            self.z == window.z && self.tile_px == window.tile_px,
            "layers projected for z{}/{}px, window is z{}/{}px",
            self.z,
            self.tile_px,
            window.z,
            window.tile_px
        );
    }

    pub fn render_input(&self, t: TileId, style: InputStyle, palette: &StylePalette) -> RasterTile {
        self.render_input_window(PixelWindow::for_tile(t, self.tile_px), style, palette)
    }

    pub fn render_target(&self, t: TileId, palette: &StylePalette) -> RasterTile {
        self.render_target_window(PixelWindow::for_tile(t, self.tile_px), palette)
    }

    pub fn render_input_window(&self, window: PixelWindow, style: InputStyle, palette: &StylePalette) -> RgbImage {
        self.check_window(&window);
        render_input(self, window, style, palette)
    }

    pub fn render_target_window(&self, window: PixelWindow, palette: &StylePalette) -> RgbImage {
        self.check_window(&window);
        render_target(self, window, palette)
    }
}

/// Renders the generator input for one 256 px tile.
pub fn render_input_tile(layers: &VectorLayerSet, t: TileId, style: InputStyle, palette: &StylePalette) -> RasterTile {
    ProjectedLayers::new(layers, t.z, DEFAULT_TILE_PX).render_input(t, style, palette)
}

/// Renders the ground-truth target for one 256 px tile: roads in the target
/// road color, then building polygons on top.
pub fn render_target_tile(layers: &VectorLayerSet, t: TileId, palette: &StylePalette) -> RasterTile {
    ProjectedLayers::new(layers, t.z, DEFAULT_TILE_PX).render_target(t, palette)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{BuildingFootprint, RoadSegment};
    use crate::tiling::{pixel_to_mercator, mercator_to_lonlat, tile_to_bounds};

    const T: TileId = TileId { z: 16, x: 51673, y: 32533 };

    fn at_pixel(px: f64, py: f64) -> GeoPoint {
        let (mx, my) = pixel_to_mercator(px, py, T, 256);
        let (lon, lat) = mercator_to_lonlat(mx, my);
        GeoPoint { lon, lat }
    }

    fn road(points: Vec<GeoPoint>, hierarchy: RoadHierarchy) -> VectorLayerSet {
        let mut set = VectorLayerSet { roads: vec![RoadSegment { points, hierarchy }], ..Default::default() };
        set.recompute_bbox();
        set
    }

    #[test]
    fn empty_layers_render_background() {
        let p = StylePalette::default();
        let layers = VectorLayerSet::default();
        for style in [InputStyle::RoadsBW, InputStyle::RoadsCRHD, InputStyle::LandUse] {
            let tile = render_input_tile(&layers, T, style, &p);
            assert_eq!(tile.count_color(p.background), 256 * 256);
        }
        assert_eq!(render_target_tile(&layers, T, &p).count_color(p.background), 256 * 256);
    }

    /// Brute force: distance from every pixel center to the segment, no bounding boxes.
    fn stroke_oracle(a: (f64, f64), b: (f64, f64), width: f64) -> Vec<bool> {
        let mut out = vec![false; 256 * 256];
        for j in 0..256 {
            for i in 0..256 {
                let (cx, cy) = (i as f64 + 0.5, j as f64 + 0.5);
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let t = (((cx - a.0) * dx + (cy - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
                out[j * 256 + i] = ((cx - qx).powi(2) + (cy - qy).powi(2)).sqrt() <= width / 2.0;
            }
        }
        out
    }

    #[test]
    fn horizontal_secondary_through_center() {
        let p = StylePalette::default();
        let b = tile_to_bounds(T);
        let c = b.center();
        let set = road(vec![GeoPoint::new(b.west - 0.001, c.lat), GeoPoint::new(b.east + 0.001, c.lat)], RoadHierarchy::Secondary);
        let layers = &set;
        let tile = render_input_tile(layers, T, InputStyle::RoadsCRHD, &p);
        let color = p.crhd_color(RoadHierarchy::Secondary);
        let rows: Vec<u32> = (0..256).filter(|&y| tile.get(128, y) == color).collect();
        let width = p.road_width(RoadHierarchy::Secondary, 16) as u32;
        assert_eq!(rows.len() as u32, width);
        assert!(rows.windows(2).all(|w| w[1] == w[0] + 1));

        let (ax, ay) = crate::tiling::lonlat_to_pixel(set.roads[0].points[0], T, 256);
        let (bx, by) = crate::tiling::lonlat_to_pixel(set.roads[0].points[1], T, 256);
        let oracle = stroke_oracle((ax, ay), (bx, by), width as f64);
        for (k, inked) in oracle.iter().enumerate() {
            let got = tile.get(k as u32 % 256, k as u32 / 256) == color;
            assert_eq!(got, *inked, "pixel {k}");
        }
    }

    #[test]
    fn diagonal_stroke_matches_oracle() {
        let p = StylePalette::default();
        let set = road(vec![at_pixel(10.3, 20.7), at_pixel(240.1, 200.9)], RoadHierarchy::Primary);
        let layers = &set;
        let tile = render_input_tile(layers, T, InputStyle::RoadsBW, &p);
        let (ax, ay) = crate::tiling::lonlat_to_pixel(set.roads[0].points[0], T, 256);
        let (bx, by) = crate::tiling::lonlat_to_pixel(set.roads[0].points[1], T, 256);
        let oracle = stroke_oracle((ax, ay), (bx, by), 6.0);
        let mismatches = oracle
            .iter()
            .enumerate()
            .filter(|(k, inked)| (tile.get(*k as u32 % 256, *k as u32 / 256) == p.bw_road_color) != **inked)
            .count();
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn building_drawn_over_road() {
        let p = StylePalette::default();
        let mut set = road(vec![at_pixel(0.0, 100.0), at_pixel(256.0, 100.0)], RoadHierarchy::Primary);
        set.buildings.push(BuildingFootprint {
            exterior: vec![at_pixel(90.0, 90.0), at_pixel(110.0, 90.0), at_pixel(110.0, 110.0), at_pixel(90.0, 110.0), at_pixel(90.0, 90.0)],
            holes: vec![],
        });
        let layers = &set;
        let tile = render_target_tile(layers, T, &p);
        assert_eq!(tile.get(100, 100), p.building_color);
        assert_eq!(tile.get(50, 100), p.target_road_color);
        assert_eq!(tile.count_color(p.building_color), 400);
    }

    #[test]
    fn target_without_buildings_is_recolored_bw() {
        let p = StylePalette::default();
        let set = road(vec![at_pixel(3.0, 7.0), at_pixel(200.0, 250.0), at_pixel(250.0, 5.0)], RoadHierarchy::Tertiary);
        let layers = &set;
        let bw = render_input_tile(layers, T, InputStyle::RoadsBW, &p);
        let target = render_target_tile(layers, T, &p);
        for (a, b) in bw.pixels().zip(target.pixels()) {
            let expect = if a == p.bw_road_color { p.target_road_color } else { a };
            assert_eq!(b, expect);
        }
    }

    #[test]
    fn hole_is_left_unfilled() {
        let p = StylePalette::default();
        let sq = |a: f64, b: f64| vec![at_pixel(a, a), at_pixel(b, a), at_pixel(b, b), at_pixel(a, b), at_pixel(a, a)];
        let set = VectorLayerSet {
            buildings: vec![BuildingFootprint { exterior: sq(50.0, 150.0), holes: vec![sq(80.0, 120.0)] }],
            ..Default::default()
        };
        let layers = &set;
        let tile = render_target_tile(layers, T, &p);
        assert_eq!(tile.count_color(p.building_color), 100 * 100 - 40 * 40);
        assert_eq!(tile.get(100, 100), p.background);
    }

    #[test]
    fn landuse_omits_tertiary() {
        let p = StylePalette::default();
        let set = road(vec![at_pixel(0.0, 100.0), at_pixel(256.0, 100.0)], RoadHierarchy::Tertiary);
        let layers = &set;
        let tile = render_input_tile(layers, T, InputStyle::LandUse, &p);
        assert_eq!(tile.count_color(p.background), 256 * 256);
    }
}

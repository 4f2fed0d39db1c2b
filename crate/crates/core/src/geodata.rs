//! Typed vector layers (roads, buildings, land use) parsed from GeoJSON, and a
//! seeded gridiron city used as a test fixture.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::tiling::{lonlat_to_mercator, mercator_to_lonlat, MAX_LATITUDE};

#[derive(Debug, Error)]
pub enum GeoDataError {
    #[error("malformed GeoJSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid GeoJSON structure: {0}")]
    Structure(String),
    #[error("feature {feature}: {message}")]
    Validation { feature: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    /// Inside [-180, 180] x (-MAX_LATITUDE, MAX_LATITUDE).
    pub fn in_band(&self) -> bool {
        (-180.0..=180.0).contains(&self.lon) && self.lat.abs() < MAX_LATITUDE
    }
}

/// Axis-aligned lon/lat box, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    pub fn from_point(p: GeoPoint) -> Self {
        Self { min_lon: p.lon, min_lat: p.lat, max_lon: p.lon, max_lat: p.lat }
    }

    pub fn extend(&mut self, p: GeoPoint) {
        self.min_lon = self.min_lon.min(p.lon);
        self.min_lat = self.min_lat.min(p.lat);
        self.max_lon = self.max_lon.max(p.lon);
        self.max_lat = self.max_lat.max(p.lat);
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon >= self.min_lon && p.lon <= self.max_lon && p.lat >= self.min_lat && p.lat <= self.max_lat
    }

    /// Zero width or zero height.
    pub fn is_degenerate(&self) -> bool {
        !(self.max_lon > self.min_lon && self.max_lat > self.min_lat)
    }

    /// Parses `min_lon,min_lat,max_lon,max_lat`.
    pub fn parse(s: &str) -> Option<Self> {
        let v: Vec<f64> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
        match v[..] {
            [min_lon, min_lat, max_lon, max_lat] if min_lon <= max_lon && min_lat <= max_lat => {
                Some(Self { min_lon, min_lat, max_lon, max_lat })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoadHierarchy {
    Primary,
    Secondary,
    Tertiary,
    Other,
}

impl RoadHierarchy {
    pub const ALL: [RoadHierarchy; 4] = [Self::Primary, Self::Secondary, Self::Tertiary, Self::Other];

    /// Canonical `highway` tag written when serializing.
    pub fn canonical_tag(self) -> &'static str {
        match self {
            Self::Primary => "primary",
            Self::Secondary => "secondary",
            Self::Tertiary => "tertiary",
            Self::Other => "path",
        }
    }
}

/// Maps an OSM `highway` tag to a hierarchy level. Total; unknown tags are `Other`.
pub fn classify_road(highway_tag: &str) -> RoadHierarchy {
    match highway_tag {
        "motorway" | "motorway_link" | "trunk" | "primary" => RoadHierarchy::Primary,
        "secondary" | "secondary_link" => RoadHierarchy::Secondary,
        "tertiary" | "residential" | "unclassified" | "living_street" | "service" => RoadHierarchy::Tertiary,
        _ => RoadHierarchy::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub points: Vec<GeoPoint>,
    pub hierarchy: RoadHierarchy,
}

/// Linear ring; closed when first == last and it has at least 4 points.
pub type Ring = Vec<GeoPoint>;

pub fn ring_is_closed(ring: &[GeoPoint]) -> bool {
    ring.len() >= 4 && ring.first() == ring.last()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingFootprint {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

impl BuildingFootprint {
    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LandUseClass {
    Residential,
    Commercial,
    Industrial,
    Institution,
    OpenSpace,
    Road,
    Water,
    Other,
}

impl LandUseClass {
    pub const ALL: [LandUseClass; 8] = [
        Self::Residential,
        Self::Commercial,
        Self::Industrial,
        Self::Institution,
        Self::OpenSpace,
        Self::Road,
        Self::Water,
        Self::Other,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Self::Residential => "residential",
            Self::Commercial => "commercial",
            Self::Industrial => "industrial",
            Self::Institution => "institution",
            Self::OpenSpace => "open_space",
            Self::Road => "road",
            Self::Water => "water",
            Self::Other => "other",
        }
    }

    /// Maps a `landuse` tag (OSM values or our own codes) to a class.
    pub fn from_tag(tag: &str) -> Self {
        match tag.to_ascii_lowercase().as_str() {
            "residential" => Self::Residential,
            "commercial" | "retail" => Self::Commercial,
            "industrial" => Self::Industrial,
            "institution" | "institutional" | "education" | "religious" | "civic" => Self::Institution,
            "open_space" | "grass" | "park" | "recreation_ground" | "forest" | "meadow" | "cemetery" => {
                Self::OpenSpace
            }
            "road" | "highway" => Self::Road,
            "water" | "reservoir" | "basin" => Self::Water,
            _ => Self::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandUseParcel {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
    pub class: LandUseClass,
}

impl LandUseParcel {
    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }
}

/// Non-fatal problem found while parsing external data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryIssue {
    pub feature: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VectorLayerSet {
    pub roads: Vec<RoadSegment>,
    pub buildings: Vec<BuildingFootprint>,
    pub landuse: Vec<LandUseParcel>,
    /// `None` when the set holds no vertices.
    pub bbox: Option<BBox>,
    #[serde(default)]
    pub issues: Vec<GeometryIssue>,
}

impl VectorLayerSet {
    pub fn is_empty(&self) -> bool {
        self.roads.is_empty() && self.buildings.is_empty() && self.landuse.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = GeoPoint> + '_ {
        let roads = self.roads.iter().flat_map(|r| r.points.iter().copied());
        let buildings = self.buildings.iter().flat_map(|b| b.rings().flatten().copied());
        let landuse = self.landuse.iter().flat_map(|p| p.rings().flatten().copied());
        roads.chain(buildings).chain(landuse)
    }

    pub fn recompute_bbox(&mut self) {
        let mut it = self.vertices();
        self.bbox = it.next().map(|first| {
            let mut b = BBox::from_point(first);
            for p in it {
                b.extend(p);
            }
            b
        });
    }

    /// True when the bbox is missing or has zero area.
    pub fn bbox_is_degenerate(&self) -> bool {
        self.bbox.map_or(true, |b| b.is_degenerate())
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn parse_position(v: &Value, feature: usize) -> Result<GeoPoint, GeoDataError> {
    let bad = |message: String| GeoDataError::Validation { feature, message };
    let arr = v.as_array().ok_or_else(|| bad("position is not an array".into()))?;
    if arr.len() < 2 {
        return Err(bad("position needs at least two numbers".into()));
    }
    let lon = arr[0].as_f64().ok_or_else(|| bad("non-numeric longitude".into()))?;
    let lat = arr[1].as_f64().ok_or_else(|| bad("non-numeric latitude".into()))?;
    let p = GeoPoint { lon, lat };
    if !(lat.abs() < MAX_LATITUDE) {
        return Err(bad(format!("latitude {lat} outside the Web Mercator band")));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(bad(format!("longitude {lon} outside [-180, 180]")));
    }
    Ok(p)
}

fn parse_line(v: &Value, feature: usize) -> Result<Vec<GeoPoint>, GeoDataError> {
    let arr = v.as_array().ok_or_else(|| GeoDataError::Validation {
        feature,
        message: "coordinates are not an array".into(),
    })?;
    arr.iter().map(|p| parse_position(p, feature)).collect()
}

fn parse_polygon(v: &Value, feature: usize) -> Result<(Ring, Vec<Ring>), GeoDataError> {
    let rings = v.as_array().ok_or_else(|| GeoDataError::Validation {
        feature,
        message: "polygon coordinates are not an array".into(),
    })?;
    let mut rings = rings.iter().map(|r| parse_line(r, feature));
    let exterior = rings.next().ok_or_else(|| GeoDataError::Validation {
        feature,
        message: "polygon has no exterior ring".into(),
    })??;
    let holes = rings.collect::<Result<Vec<_>, _>>()?;
    Ok((exterior, holes))
}

fn dedup_consecutive(points: Vec<GeoPoint>) -> Vec<GeoPoint> {
    let mut out: Vec<GeoPoint> = Vec::with_capacity(points.len());
    for p in points {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

fn tag<'a>(props: Option<&'a Map<String, Value>>, key: &str) -> Option<String> {
    let v = props?.get(key)?;
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parses a GeoJSON FeatureCollection into typed layers.
pub fn parse_geojson(text: &str) -> Result<VectorLayerSet, GeoDataError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| GeoDataError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(GeoDataError::Structure("top-level object is not a FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| GeoDataError::Structure("FeatureCollection has no features array".into()))?;

    let mut set = VectorLayerSet::default();
    for (idx, feature) in features.iter().enumerate() {
        let props = feature.get("properties").and_then(Value::as_object);
        let Some(geometry) = feature.get("geometry").filter(|g| !g.is_null()) else {
            continue;
        };
        let gtype = geometry.get("type").and_then(Value::as_str).unwrap_or_default();
        let coords = geometry.get("coordinates").unwrap_or(&Value::Null);
        match gtype {
            "LineString" | "MultiLineString" => {
                let Some(highway) = tag(props, "highway") else { continue };
                let hierarchy = classify_road(&highway);
                let lines = if gtype == "LineString" {
                    vec![parse_line(coords, idx)?]
                } else {
                    coords
                        .as_array()
                        .ok_or_else(|| GeoDataError::Validation {
                            feature: idx,
                            message: "MultiLineString coordinates are not an array".into(),
                        })?
                        .iter()
                        .map(|l| parse_line(l, idx))
                        .collect::<Result<_, _>>()?
                };
                for line in lines {
                    let points = dedup_consecutive(line);
                    if points.len() < 2 {
                        set.issues.push(GeometryIssue {
                            feature: idx,
                            message: "road with fewer than two distinct points skipped".into(),
                        });
                        continue;
                    }
                    set.roads.push(RoadSegment { points, hierarchy });
                }
            }
            "Polygon" | "MultiPolygon" => {
                let building = tag(props, "building").filter(|b| b != "no");
                let landuse = tag(props, "landuse");
                if building.is_none() && landuse.is_none() {
                    continue;
                }
                let polygons = if gtype == "Polygon" {
                    vec![parse_polygon(coords, idx)?]
                } else {
                    coords
                        .as_array()
                        .ok_or_else(|| GeoDataError::Validation {
                            feature: idx,
                            message: "MultiPolygon coordinates are not an array".into(),
                        })?
                        .iter()
                        .map(|p| parse_polygon(p, idx))
                        .collect::<Result<_, _>>()?
                };
                for (exterior, holes) in polygons {
                    if !std::iter::once(&exterior).chain(holes.iter()).all(|r| ring_is_closed(r)) {
                        log::warn!("feature={idx} issue=open_or_short_ring kept=true");
                        set.issues.push(GeometryIssue {
                            feature: idx,
                            message: "ring not closed or shorter than 4 points".into(),
                        });
                    }
                    if building.is_some() {
                        set.buildings.push(BuildingFootprint { exterior, holes });
                    } else if let Some(code) = &landuse {
                        set.landuse.push(LandUseParcel { exterior, holes, class: LandUseClass::from_tag(code) });
                    }
                }
            }
            _ => {}
        }
    }
    set.recompute_bbox();
    Ok(set)
}

fn coords_of(ring: &[GeoPoint]) -> Value {
    Value::Array(ring.iter().map(|p| json!([p.lon, p.lat])).collect())
}

fn polygon_coords(exterior: &Ring, holes: &[Ring]) -> Value {
    Value::Array(std::iter::once(exterior).chain(holes).map(|r| coords_of(r)).collect())
}

/// Serializes layers as a GeoJSON FeatureCollection that [`parse_geojson`]
/// reads back to an equal set.
pub fn to_geojson(set: &VectorLayerSet) -> Value {
    let mut features = Vec::new();
    for r in &set.roads {
        features.push(json!({
            "type": "Feature",
            "properties": { "highway": r.hierarchy.canonical_tag() },
            "geometry": { "type": "LineString", "coordinates": coords_of(&r.points) },
        }));
    }
    for b in &set.buildings {
        features.push(json!({
            "type": "Feature",
            "properties": { "building": "yes" },
            "geometry": { "type": "Polygon", "coordinates": polygon_coords(&b.exterior, &b.holes) },
        }));
    }
    for p in &set.landuse {
        features.push(json!({
            "type": "Feature",
            "properties": { "landuse": p.class.code() },
            "geometry": { "type": "Polygon", "coordinates": polygon_coords(&p.exterior, &p.holes) },
        }));
    }
    let mut doc = json!({ "type": "FeatureCollection", "features": features });
    if let Some(b) = set.bbox {
        doc["bbox"] = json!([b.min_lon, b.min_lat, b.max_lon, b.max_lat]);
    }
    doc
}

/// South-west corner of every fixture city.
pub const FIXTURE_ORIGIN: GeoPoint = GeoPoint { lon: 103.82, lat: 1.29 };
/// Road-to-road block pitch of fixture cities, in ground meters.
pub const FIXTURE_BLOCK_METERS: f64 = 150.0;
/// Buildings emitted per fixture block, one per quadrant.
pub const FIXTURE_BUILDINGS_PER_BLOCK: usize = 4;
const FIXTURE_SETBACK_METERS: f64 = 12.0;
const FIXTURE_PARCEL_INSET_METERS: f64 = 4.0;

/// Seeded gridiron city: Secondary roads bound every block (each grid line
/// split into one segment per block side), a Tertiary road runs north-south
/// through each block's middle, each quadrant holds one rectangular building
/// set back from the streets, and each block is one land-use parcel.
pub fn synth_grid_city(blocks_x: usize, blocks_y: usize, seed: u64) -> VectorLayerSet {
    assert!(blocks_x >= 1 && blocks_y >= 1, "a fixture city needs at least one block");
    let mut rng = SplitMix64::new(seed);
    let (ox, oy) = lonlat_to_mercator(FIXTURE_ORIGIN.lon, FIXTURE_ORIGIN.lat);
    // Mercator meters per ground meter at the origin latitude.
    let k = 1.0 / FIXTURE_ORIGIN.lat.to_radians().cos();
    let at = |east_m: f64, north_m: f64| {
        let (lon, lat) = mercator_to_lonlat(ox + east_m * k, oy + north_m * k);
        GeoPoint { lon, lat }
    };
    let rect = |x0: f64, y0: f64, x1: f64, y1: f64| -> Ring {
        vec![at(x0, y0), at(x1, y0), at(x1, y1), at(x0, y1), at(x0, y0)]
    };
    let pitch = FIXTURE_BLOCK_METERS;
    let mut set = VectorLayerSet::default();

    for i in 0..=blocks_x {
        for j in 0..blocks_y {
            let x = i as f64 * pitch;
            set.roads.push(RoadSegment {
                points: vec![at(x, j as f64 * pitch), at(x, (j + 1) as f64 * pitch)],
                hierarchy: RoadHierarchy::Secondary,
            });
        }
    }
    for j in 0..=blocks_y {
        for i in 0..blocks_x {
            let y = j as f64 * pitch;
            set.roads.push(RoadSegment {
                points: vec![at(i as f64 * pitch, y), at((i + 1) as f64 * pitch, y)],
                hierarchy: RoadHierarchy::Secondary,
            });
        }
    }

    let half = pitch / 2.0;
    let quadrant = half - 2.0 * FIXTURE_SETBACK_METERS;
    let parcel_classes = &LandUseClass::ALL[..5];
    for j in 0..blocks_y {
        for i in 0..blocks_x {
            let (bx, by) = (i as f64 * pitch, j as f64 * pitch);
            set.roads.push(RoadSegment {
                points: vec![at(bx + half, by), at(bx + half, by + pitch)],
                hierarchy: RoadHierarchy::Tertiary,
            });
            for q in 0..FIXTURE_BUILDINGS_PER_BLOCK {
                let qx = bx + (q % 2) as f64 * half + FIXTURE_SETBACK_METERS;
                let qy = by + (q / 2) as f64 * half + FIXTURE_SETBACK_METERS;
                let w = quadrant * rng.uniform(0.55, 0.95);
                let h = quadrant * rng.uniform(0.55, 0.95);
                let dx = (quadrant - w) * rng.next_f64();
                let dy = (quadrant - h) * rng.next_f64();
                set.buildings.push(BuildingFootprint {
                    exterior: rect(qx + dx, qy + dy, qx + dx + w, qy + dy + h),
                    holes: Vec::new(),
                });
            }
            let inset = FIXTURE_PARCEL_INSET_METERS;
            set.landuse.push(LandUseParcel {
                exterior: rect(bx + inset, by + inset, bx + pitch - inset, by + pitch - inset),
                holes: Vec::new(),
                class: parcel_classes[rng.below(parcel_classes.len() as u64) as usize],
            });
        }
    }
    set.recompute_bbox();
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn road_classification_table() {
        assert_eq!(classify_road("motorway"), RoadHierarchy::Primary);
        assert_eq!(classify_road("trunk"), RoadHierarchy::Primary);
        assert_eq!(classify_road("secondary_link"), RoadHierarchy::Secondary);
        assert_eq!(classify_road("residential"), RoadHierarchy::Tertiary);
        assert_eq!(classify_road("service"), RoadHierarchy::Tertiary);
        assert_eq!(classify_road("footpath_xyz"), RoadHierarchy::Other);
        assert_eq!(classify_road(""), RoadHierarchy::Other);
        for h in RoadHierarchy::ALL {
            assert_eq!(classify_road(h.canonical_tag()), h);
        }
    }

    #[test]
    fn empty_collection() {
        let set = parse_geojson(r#"{"type":"FeatureCollection","features":[]}"#).unwrap();
        assert!(set.is_empty());
        assert!(set.bbox.is_none());
        assert!(set.bbox_is_degenerate());
    }

    #[test]
    fn primary_linestring() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"highway":"primary"},
             "geometry":{"type":"LineString","coordinates":[[103.8,1.3],[103.81,1.3]]}}]}"#;
        let set = parse_geojson(text).unwrap();
        assert_eq!(set.roads.len(), 1);
        assert_eq!(set.roads[0].hierarchy, RoadHierarchy::Primary);
        let b = set.bbox.unwrap();
        assert_eq!((b.min_lon, b.max_lon, b.min_lat, b.max_lat), (103.8, 103.81, 1.3, 1.3));
    }

    #[test]
    fn building_with_hole() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"building":"yes"},
             "geometry":{"type":"Polygon","coordinates":[
                [[0,0],[1,0],[1,1],[0,1],[0,0]],
                [[0.2,0.2],[0.4,0.2],[0.4,0.4],[0.2,0.2]]]}},
            {"type":"Feature","properties":{"name":"ignored"},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}]}"#;
        let set = parse_geojson(text).unwrap();
        assert_eq!(set.buildings.len(), 1);
        assert_eq!(set.buildings[0].holes.len(), 1);
        assert!(set.landuse.is_empty());
        assert!(set.issues.is_empty());
    }

    #[test]
    fn open_ring_is_kept_and_flagged() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"landuse":"retail"},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}}]}"#;
        let set = parse_geojson(text).unwrap();
        assert_eq!(set.landuse.len(), 1);
        assert_eq!(set.landuse[0].class, LandUseClass::Commercial);
        assert_eq!(set.issues.len(), 1);
        assert_eq!(set.issues[0].feature, 0);
    }

    #[test]
    fn malformed_reports_offset() {
        let text = "{\"type\":\"FeatureCollection\",\n \"features\": [,]}";
        match parse_geojson(text) {
            Err(GeoDataError::Parse { offset, .. }) => assert_eq!(&text[offset..offset + 1], ","),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_band_latitude_names_feature() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"highway":"primary"},
             "geometry":{"type":"LineString","coordinates":[[0,0],[0,1]]}},
            {"type":"Feature","properties":{"highway":"primary"},
             "geometry":{"type":"LineString","coordinates":[[0,0],[0,89.5]]}}]}"#;
        match parse_geojson(text) {
            Err(GeoDataError::Validation { feature, .. }) => assert_eq!(feature, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_vertices_collapse() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"highway":"service"},
             "geometry":{"type":"MultiLineString","coordinates":[[[0,0],[0,0],[0,1]],[[2,2],[2,2]]]}}]}"#;
        let set = parse_geojson(text).unwrap();
        assert_eq!(set.roads.len(), 1);
        assert_eq!(set.roads[0].points.len(), 2);
        assert_eq!(set.issues.len(), 1);
    }

    #[test]
    fn fixture_is_deterministic() {
        assert_eq!(synth_grid_city(3, 2, 11), synth_grid_city(3, 2, 11));
        assert_ne!(synth_grid_city(3, 2, 11), synth_grid_city(3, 2, 12));
    }
}

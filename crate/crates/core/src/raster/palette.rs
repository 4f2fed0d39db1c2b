use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::RasterError;
use crate::geodata::{LandUseClass, RoadHierarchy};
use crate::image::{hex_color, parse_hex_color, Rgb};

/// Which rendering of the vector layers feeds the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputStyle {
    /// Black strokes, hierarchy encoded by width only.
    #[serde(rename = "bw")]
    RoadsBW,
    /// Colored road hierarchy diagram: color and width per hierarchy.
    #[serde(rename = "crhd")]
    RoadsCRHD,
    /// Land-use parcels by class color plus primary/secondary roads.
    #[serde(rename = "landuse")]
    LandUse,
}

impl FromStr for InputStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bw" | "roads-bw" => Ok(Self::RoadsBW),
            "crhd" | "roads-crhd" => Ok(Self::RoadsCRHD),
            "landuse" | "land-use" => Ok(Self::LandUse),
            other => Err(format!("unknown input style {other:?} (expected bw, crhd or landuse)")),
        }
    }
}

impl fmt::Display for InputStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RoadsBW => "bw",
            Self::RoadsCRHD => "crhd",
            Self::LandUse => "landuse",
        })
    }
}

mod hex_color_serde {
    use super::*;

    pub fn serialize<S: Serializer>(c: &Rgb, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex_color(*c))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rgb, D::Error> {
        let s = String::deserialize(d)?;
        parse_hex_color(&s).ok_or_else(|| serde::de::Error::custom(format!("bad color {s:?}, expected #RRGGBB")))
    }
}

mod hex_array {
    use super::*;

    pub fn serialize<S: Serializer, const N: usize>(c: &[Rgb; N], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(c.iter().map(|c| hex_color(*c)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[Rgb; N], D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        let colors: Vec<Rgb> = v
            .iter()
            .map(|s| parse_hex_color(s).ok_or_else(|| serde::de::Error::custom(format!("bad color {s:?}"))))
            .collect::<Result<_, _>>()?;
        colors.try_into().map_err(|_| serde::de::Error::custom(format!("expected {N} colors")))
    }
}

/// Colors and stroke widths shared by every rendering.
///
/// Hierarchy-indexed arrays follow [`RoadHierarchy::ALL`] order; land-use
/// colors follow [`LandUseClass::ALL`]. Stroke widths are given for zoom 16
/// and double per zoom-in step, halving (down to 1 px) per zoom-out step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StylePalette {
    #[serde(with = "hex_color_serde")]
    pub background: Rgb,
    #[serde(with = "hex_array")]
    pub crhd_road_colors: [Rgb; 4],
    pub road_widths_z16: [f64; 4],
    #[serde(with = "hex_color_serde")]
    pub bw_road_color: Rgb,
    #[serde(with = "hex_color_serde")]
    pub target_road_color: Rgb,
    #[serde(with = "hex_color_serde")]
    pub building_color: Rgb,
    #[serde(with = "hex_array")]
    pub landuse_colors: [Rgb; 8],
}

impl Default for StylePalette {
    fn default() -> Self {
        Self {
            background: [0xFF, 0xFF, 0xFF],
            crhd_road_colors: [[0xD6, 0x2F, 0x2F], [0xF2, 0xA9, 0x3B], [0x9A, 0xA0, 0xA6], [0xC9, 0xCD, 0xD2]],
            road_widths_z16: [6.0, 4.0, 2.0, 1.0],
            bw_road_color: [0, 0, 0],
            target_road_color: [0xAA, 0xAA, 0xAA],
            building_color: [0, 0, 0],
            landuse_colors: [
                [0xF5, 0xD0, 0x8A], // residential
                [0xE8, 0x8E, 0x8E], // commercial
                [0xB4, 0x9A, 0xD6], // industrial
                [0x8E, 0xB8, 0xE8], // institution
                [0x9C, 0xD6, 0x8E], // open space
                [0xD9, 0xD9, 0xD9], // road reserve
                [0x7F, 0xC8, 0xE6], // water
                [0xE6, 0xE0, 0xC8], // other
            ],
        }
    }
}

fn hierarchy_index(h: RoadHierarchy) -> usize {
    match h {
        RoadHierarchy::Primary => 0,
        RoadHierarchy::Secondary => 1,
        RoadHierarchy::Tertiary => 2,
        RoadHierarchy::Other => 3,
    }
}

impl StylePalette {
    pub fn crhd_color(&self, h: RoadHierarchy) -> Rgb {
        self.crhd_road_colors[hierarchy_index(h)]
    }

    pub fn landuse_color(&self, class: LandUseClass) -> Rgb {
        let i = LandUseClass::ALL.iter().position(|c| *c == class).unwrap_or(7);
        self.landuse_colors[i]
    }

    /// Stroke width in pixels at zoom `z`.
    pub fn road_width(&self, h: RoadHierarchy, z: u8) -> f64 {
        let w = self.road_widths_z16[hierarchy_index(h)] * 2f64.powi(z as i32 - 16);
        w.max(1.0)
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        if let Some(w) = self.road_widths_z16.iter().find(|w| !(**w >= 1.0) || !w.is_finite()) {
            return Err(RasterError::Palette(format!("stroke width {w} below 1 px")));
        }
        let bg = self.background;
        let inks = self
            .crhd_road_colors
            .iter()
            .chain(self.landuse_colors.iter())
            .chain([&self.bw_road_color, &self.target_road_color, &self.building_color]);
        for c in inks {
            if *c == bg {
                return Err(RasterError::Palette(format!("color {} equals the background", hex_color(*c))));
            }
        }
        if self.building_color == self.target_road_color {
            return Err(RasterError::Palette("building and target road colors must differ".into()));
        }
        Ok(())
    }

    /// Stable content hash: SHA-256 over the canonical JSON form, first 16 hex digits.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("palette serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_palette_is_valid() {
        StylePalette::default().validate().unwrap();
    }

    #[test]
    fn widths_scale_with_zoom() {
        let p = StylePalette::default();
        assert_eq!(p.road_width(RoadHierarchy::Primary, 16), 6.0);
        assert_eq!(p.road_width(RoadHierarchy::Primary, 17), 12.0);
        assert_eq!(p.road_width(RoadHierarchy::Secondary, 15), 2.0);
        assert_eq!(p.road_width(RoadHierarchy::Other, 14), 1.0);
        assert_eq!(p.road_width(RoadHierarchy::Tertiary, 14), 1.0);
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = StylePalette::default();
        assert_eq!(a.content_hash(), StylePalette::default().content_hash());
        let mut b = a.clone();
        b.background = [0xFE, 0xFE, 0xFE];
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn partial_override_keeps_defaults() {
        let p: StylePalette = serde_json::from_str(r##"{"target_road_color":"#999999"}"##).unwrap();
        assert_eq!(p.target_road_color, [0x99, 0x99, 0x99]);
        assert_eq!(p.background, StylePalette::default().background);
        assert!(serde_json::from_str::<StylePalette>(r#"{"nope":1}"#).is_err());
    }

    #[test]
    fn rejects_ink_equal_to_background() {
        let mut p = StylePalette::default();
        p.crhd_road_colors[2] = p.background;
        assert!(p.validate().is_err());
        let mut p = StylePalette::default();
        p.road_widths_z16[3] = 0.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn style_names() {
        for s in [InputStyle::RoadsBW, InputStyle::RoadsCRHD, InputStyle::LandUse] {
            assert_eq!(s.to_string().parse::<InputStyle>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
        }
    }
}

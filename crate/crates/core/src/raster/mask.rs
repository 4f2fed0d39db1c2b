use crate::image::{Rgb, RgbImage};

/// Rounded integer luminance `0.299R + 0.587G + 0.114B`.
#[inline]
pub fn luminance(c: Rgb) -> u8 {
    ((299 * c[0] as u32 + 587 * c[1] as u32 + 114 * c[2] as u32 + 500) / 1000) as u8
}

/// Packed bit mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, words: vec![0; n.div_ceil(64)] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        let i = y as usize * self.width as usize + x as usize;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = y as usize * self.width as usize + x as usize;
        if v {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// (|A ∩ B|, |A ∪ B|). Masks must have equal dimensions.
    pub fn overlap(&self, other: &Mask) -> (u64, u64) {
        assert_eq!((self.width, self.height), (other.width, other.height), "mask dimensions differ");
        self.words.iter().zip(&other.words).fold((0, 0), |(i, u), (a, b)| {
            (i + (a & b).count_ones() as u64, u + (a | b).count_ones() as u64)
        })
    }
}

/// Sets a bit for every pixel whose luminance is strictly below `threshold`.
pub fn binarize(tile: &RgbImage, threshold: u8) -> Mask {
    let mut m = Mask::new(tile.width(), tile.height());
    for (i, px) in tile.pixels().enumerate() {
        if luminance(px) < threshold {
            m.words[i / 64] |= 1 << (i % 64);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::StylePalette;

    #[test]
    fn luminance_of_palette_tones() {
        assert_eq!(luminance([0xAA, 0xAA, 0xAA]), 170);
        assert_eq!(luminance([0, 0, 0]), 0);
        assert_eq!(luminance([255, 255, 255]), 255);
        assert_eq!(luminance([255, 0, 0]), 76);
    }

    #[test]
    fn white_and_black_tiles() {
        let white = RgbImage::filled(16, 16, [255; 3]);
        let black = RgbImage::filled(16, 16, [0; 3]);
        assert_eq!(binarize(&white, 85).count(), 0);
        assert_eq!(binarize(&black, 85).count(), 256);
    }

    #[test]
    fn default_target_palette_isolates_buildings() {
        let p = StylePalette::default();
        let mut tile = RgbImage::filled(4, 1, p.background);
        tile.put(1, 0, p.target_road_color);
        tile.put(2, 0, p.building_color);
        let m = binarize(&tile, 85);
        assert_eq!((m.get(0, 0), m.get(1, 0), m.get(2, 0), m.get(3, 0)), (false, false, true, false));
    }

    #[test]
    fn overlap_counts() {
        let a = Mask::from_fn(10, 10, |x, _| x < 5);
        let b = Mask::from_fn(10, 10, |_, y| y < 5);
        assert_eq!(a.overlap(&b), (25, 75));
    }
}

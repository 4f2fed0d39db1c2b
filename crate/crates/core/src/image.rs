//! Square 8-bit RGB rasters and their PNG encoding.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("png decode error in {path}: {message}")]
    Decode { path: String, message: String },
    #[error("png encode error: {0}")]
    Encode(String),
    #[error("raster is {width}x{height}; tiles must be square")]
    NotSquare { width: u32, height: u32 },
    #[error("unsupported png color layout {0}")]
    Unsupported(String),
}

pub type Rgb = [u8; 3];

/// Row-major RGB raster. Tiles are square; mosaics reuse the type with
/// arbitrary dimensions through [`RgbImage`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        let data = color.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Self { width, height, data }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        (data.len() == width as usize * height as usize * 3).then_some(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, c: Rgb) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn count_color(&self, c: Rgb) -> usize {
        self.pixels().filter(|p| *p == c).count()
    }

    /// Copies `src` so that its (0, 0) lands at (x0, y0). `src` must fit.
    pub fn blit(&mut self, src: &RgbImage, x0: u32, y0: u32) {
        assert!(x0 + src.width <= self.width && y0 + src.height <= self.height);
        let row = src.width as usize * 3;
        for y in 0..src.height as usize {
            let d = ((y0 as usize + y) * self.width as usize + x0 as usize) * 3;
            self.data[d..d + row].copy_from_slice(&src.data[y * row..(y + 1) * row]);
        }
    }

    pub fn crop(&self, x0: u32, y0: u32, width: u32, height: u32) -> RgbImage {
        assert!(x0 + width <= self.width && y0 + height <= self.height);
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in y0..y0 + height {
            let s = (y as usize * self.width as usize + x0 as usize) * 3;
            data.extend_from_slice(&self.data[s..s + width as usize * 3]);
        }
        RgbImage { width, height, data }
    }

    /// 8-bit RGB, no alpha, no interlacing.
    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| ImageError::Encode(e.to_string()))?;
            w.write_image_data(&self.data).map_err(|e| ImageError::Encode(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let io = |source| ImageError::Io { path: path.display().to_string(), source };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let bytes = self.encode_png()?;
        let mut f = BufWriter::new(File::create(path).map_err(io)?);
        f.write_all(&bytes).map_err(io)?;
        f.flush().map_err(io)
    }

    /// Decodes RGB, RGBA (alpha dropped), grayscale and palette PNGs to RGB.
    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let name = path.display().to_string();
        let file = File::open(path).map_err(|source| ImageError::Io { path: name.clone(), source })?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let decode = |e: png::DecodingError| ImageError::Decode { path: name.clone(), message: e.to_string() };
        let mut reader = decoder.read_info().map_err(decode)?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf).map_err(decode)?;
        buf.truncate(info.buffer_size());
        let (width, height) = (info.width, info.height);
        let data = match info.color_type {
            png::ColorType::Rgb => buf,
            png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            other => return Err(ImageError::Unsupported(format!("{other:?}"))),
        };
        Ok(RgbImage { width, height, data })
    }
}

/// A square map tile (default 256x256).
pub type RasterTile = RgbImage;

/// Loads a PNG and checks that it is square.
pub fn load_tile(path: &Path) -> Result<RasterTile, ImageError> {
    let img = RgbImage::load_png(path)?;
    if img.width != img.height {
        return Err(ImageError::NotSquare { width: img.width, height: img.height });
    }
    Ok(img)
}

pub fn hex_color(c: Rgb) -> String {
    format!("#{:02X}{:02X}{:02X}", c[0], c[1], c[2])
}

pub fn parse_hex_color(s: &str) -> Option<Rgb> {
    let s = s.strip_prefix('#')?;
    if s.len() != 6 {
        return None;
    }
    let v = u32::from_str_radix(s, 16).ok()?;
    Some([(v >> 16) as u8, (v >> 8) as u8, v as u8])
}

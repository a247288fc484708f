//! Grayscale images and the two on-disk formats: binary PGM (`P5`, 8-bit)
//! and a raw little-endian `f64` format.
//!
//! Raw layout: the 8-byte magic `D4LIMG\0\0`, `u32` rows, `u32` cols (16
//! header bytes), then `rows * cols` row-major `f64` values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 8] = b"D4LIMG\0\0";

/// Row-major grayscale image with values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} image needs {} pixels, got {}",
                rows * cols,
                pixels.len()
            )));
        }
        Ok(GrayImage { rows, cols, pixels })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                pixels.push(f(r, c));
            }
        }
        GrayImage { rows, cols, pixels }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.cols + col]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// Parses a binary PGM. `origin` only labels error messages.
pub fn parse_pgm(bytes: &[u8], origin: &Path) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let header = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::format(
            origin,
            format!("not a binary PGM: expected magic \"P5\", found {header:?}"),
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = read_header_number(bytes, &mut pos)
            .ok_or_else(|| Error::format(origin, "truncated or malformed PGM header"))?;
    }
    let [cols, rows, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(
            origin,
            format!("unsupported PGM maxval {maxval}; only 8-bit (255) is accepted"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes
        .get(pos..pos + rows * cols)
        .ok_or_else(|| Error::format(origin, format!("PGM raster shorter than {rows}x{cols}")))?;
    let pixels = raster.iter().map(|&v| f64::from(v) / 255.0).collect();
    GrayImage::new(rows, cols, pixels)
}

fn read_header_number(bytes: &[u8], pos: &mut usize) -> Option<usize> {
    loop {
        match bytes.get(*pos)? {
            b'#' => {
                while *bytes.get(*pos)? != b'\n' {
                    *pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}

/// Encodes as 8-bit `P5`, rounding `v * 255` after clamping to `[0, 1]`.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.cols, image.rows).into_bytes();
    out.extend(
        image
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn parse_raw(bytes: &[u8], origin: &Path) -> Result<GrayImage> {
    if bytes.len() < 16 || &bytes[..8] != RAW_MAGIC {
        return Err(Error::format(origin, "missing D4LIMG header"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != rows * cols * 8 {
        return Err(Error::format(
            origin,
            format!("raw body has {} bytes, expected {}", body.len(), rows * cols * 8),
        ));
    }
    let pixels = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    GrayImage::new(rows, cols, pixels)
}

pub fn encode_raw(image: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + image.pixels.len() * 8);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(image.rows as u32).to_le_bytes());
    out.extend_from_slice(&(image.cols as u32).to_le_bytes());
    for v in &image.pixels {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Loads either format, dispatching on the leading magic bytes.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(RAW_MAGIC) {
        parse_raw(&bytes, path)
    } else {
        parse_pgm(&bytes, path)
    }
}

//! Grayscale rasters and image file IO.
//!
//! Binary PGM (P5) is read and written natively; other formats go through
//! the `image` crate and are converted to 8-bit luma.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Grayscale image, row-major, `data[y * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                op: "Raster::new",
                expected: width * height,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "Raster::new" });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// Loads a grayscale image. `.pgm` / `.pnm` files are parsed directly,
/// anything else is decoded by the `image` crate.
pub fn load_image(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let is_pnm = matches!(ext.as_deref(), Some("pgm") | Some("pnm")) || bytes.starts_with(b"P5");
    let decoded = if is_pnm {
        decode_pgm(&bytes)
    } else {
        decode_other(&bytes)
    };
    decoded.map_err(|reason| Error::Image {
        path: path.to_path_buf(),
        reason,
    })
}

fn decode_other(bytes: &[u8]) -> std::result::Result<Raster, String> {
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let luma = img.to_luma8();
    let (w, h) = luma.dimensions();
    let data = luma.as_raw().iter().map(|&v| f64::from(v)).collect();
    Raster::new(w as usize, h as usize, data).map_err(|e| e.to_string())
}

/// Parses a binary PGM. Intensities are kept on the file's `0..=maxval` scale.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<Raster, String> {
    if !bytes.starts_with(b"P5") {
        return Err("missing P5 magic".into());
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format!("expected {name} at byte {start}"));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("{name} out of range at byte {start}"))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(format!("empty image ({width}x{height})"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} outside 1..=65535"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(format!("expected whitespace after header at byte {pos}"));
    }
    pos += 1;
    let depth = if maxval < 256 { 1 } else { 2 };
    let needed = width * height * depth;
    let body = &bytes[pos..];
    if body.len() < needed {
        return Err(format!(
            "pixel data truncated: {} of {needed} bytes present",
            body.len()
        ));
    }
    let data = if depth == 1 {
        body[..needed].iter().map(|&v| f64::from(v)).collect()
    } else {
        body[..needed]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    };
    Raster::new(width, height, data).map_err(|e| e.to_string())
}

/// Encodes an 8-bit binary PGM. `white` is the intensity mapped to 255;
/// values are rounded and clamped to `0..=255`.
pub fn encode_pgm(raster: &Raster, white: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.extend(
        raster
            .data
            .iter()
            .map(|&v| (v / white * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn write_pgm(path: &Path, raster: &Raster, white: f64) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm(raster, white))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let r = Raster::new(3, 2, vec![0.0, 10.0, 20.0, 30.0, 40.0, 255.0]).unwrap();
        let bytes = encode_pgm(&r, 255.0);
        assert_eq!(decode_pgm(&bytes).unwrap(), r);
    }

    #[test]
    fn pgm_with_comments_and_16_bit() {
        let mut bytes = b"P5\n# a comment\n2 1\n# another\n1000\n".to_vec();
        bytes.extend_from_slice(&[0x01, 0x00, 0x03, 0xE8]);
        let r = decode_pgm(&bytes).unwrap();
        assert_eq!(r.pixels(), &[256.0, 1000.0]);
    }

    #[test]
    fn corrupt_pgm_is_rejected() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00\x01").unwrap_err().contains("truncated"));
        assert!(decode_pgm(b"P5\nx 2\n255\n").unwrap_err().contains("width"));
        assert!(decode_pgm(b"P5\n0 2\n255\n").is_err());
    }

    #[test]
    fn raster_validation() {
        assert!(matches!(Raster::new(0, 3, vec![]), Err(Error::EmptyImage)));
        assert!(Raster::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Raster::new(1, 1, vec![f64::INFINITY]).is_err());
    }
}

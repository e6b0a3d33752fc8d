// SPDX-License-Identifier: Apache-2.0

//! Minimal binary/ASCII graymap (PGM) reading and binary writing.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major samples.
    pub pixels: Vec<u16>,
}

impl GrayImage {
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }
}

/// Encodes an 8-bit binary (P5) graymap.
pub fn write_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count does not match dimensions");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedFrame("bad PGM header field".into()))
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'2' | b'5') {
        return Err(Error::MalformedFrame("not a P2/P5 graymap".into()));
    }
    let ascii = bytes[1] == b'2';
    let mut h = Header { bytes, pos: 2 };
    let width = h.number()?;
    let height = h.number()?;
    let maxval = h.number()?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedFrame("invalid PGM dimensions or maxval".into()));
    }
    let n = width * height;
    let pixels = if ascii {
        (0..n).map(|_| h.number().map(|v| v as u16)).collect::<Result<Vec<_>>>()?
    } else {
        // exactly one whitespace byte separates the header from the raster
        let start = h.pos + 1;
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let raster = bytes
            .get(start..start + need)
            .ok_or_else(|| Error::MalformedFrame("truncated PGM raster".into()))?;
        if wide {
            raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
        } else {
            raster.iter().map(|&b| b as u16).collect()
        }
    };
    if pixels.iter().any(|&p| p as usize > maxval) {
        return Err(Error::MalformedFrame("sample exceeds maxval".into()));
    }
    Ok(GrayImage { width, height, maxval: maxval as u16, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_binary() {
        let px: Vec<u8> = (0..12).map(|v| v * 20).collect();
        let img = read_pgm(&write_pgm(4, 3, &px)).unwrap();
        assert_eq!((img.width, img.height, img.maxval), (4, 3, 255));
        assert_eq!(img.pixels, px.iter().map(|&v| v as u16).collect::<Vec<_>>());
    }

    #[test]
    fn ascii_with_comments() {
        let img = read_pgm(b"P2\n# c\n2 2\n15\n0 1\n2 15\n").unwrap();
        assert_eq!(img.pixels, vec![0, 1, 2, 15]);
        assert!(read_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(read_pgm(b"P6\n1 1\n255\n\x00\x00\x00").is_err());
    }
}

//! Binary PGM (P5) images with 8-bit samples.

use std::path::Path;

use crate::error::{Error, Result};
use crate::operators::ImageGrid;

fn format_err(path: &Path, pos: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: format!("byte {pos}: {msg}"),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(self.path, start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("digits are ASCII")
            .parse()
            .map_err(|_| format_err(self.path, start, format!("{what} out of range")))
    }
}

/// Decodes a P5 file; `path` is only used in error messages.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<ImageGrid> {
    if !bytes.starts_with(b"P5") {
        return Err(format_err(path, 0, "not a binary PGM (missing P5 magic)"));
    }
    let mut h = Header { bytes, pos: 2, path };
    let width = h.number("width")?;
    let height = h.number("height")?;
    h.skip_space();
    let maxval_pos = h.pos;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err(path, maxval_pos, "empty image"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format_err(path, maxval_pos, format!("maxval {maxval} is not 8-bit")));
    }
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(format_err(path, h.pos, "expected whitespace after maxval"));
    }
    let start = h.pos + 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| format_err(path, 2, "dimensions overflow"))?;
    let raster = &bytes[start..];
    if raster.len() < n {
        return Err(format_err(
            path,
            bytes.len(),
            format!("raster truncated: {} of {n} samples", raster.len()),
        ));
    }
    let scale = maxval as f64;
    let pixels = raster[..n].iter().map(|&b| (b as f64 / scale).min(1.0)).collect();
    ImageGrid::new(height, width, pixels)
}

/// Reads an 8-bit binary PGM and maps samples to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<ImageGrid> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

/// Clamps to `[0, 1]` and quantises with round-half-away-from-zero.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(img: &ImageGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&v| quantize(v)));
    out
}

pub fn save_image(img: &ImageGrid, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

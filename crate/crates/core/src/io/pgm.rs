//! Binary PGM (P5) and PPM (P6) rasters.
//!
//! Grayscale values are scaled to [0,1] on read; 16-bit samples are
//! big-endian per the netpbm convention. Writers always emit 8-bit files
//! and clamp to [0,1] first, so identical input produces identical bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image2D;

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderParser { bytes, pos: 0 }
    }

    /// Skips whitespace and `#` comment lines between header tokens.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, path: &Path, what: &str) -> Result<usize> {
        let tok = self
            .token()
            .ok_or_else(|| Error::format(path, format!("missing {what} in header")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format(path, format!("invalid {what} in header")))
    }
}

/// Reads a binary P5 grayscale image, scaling values to [0,1].
pub fn read_pgm(path: &Path) -> Result<Image2D> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut p = HeaderParser::new(&bytes);
    let magic = p
        .token()
        .ok_or_else(|| Error::format(path, "empty file"))?;
    match magic {
        b"P5" => {}
        b"P6" => {
            return Err(Error::format(
                path,
                "P6 is a color image; use the PPM overlay reader instead of the grayscale reader",
            ))
        }
        other => {
            return Err(Error::format(
                path,
                format!(
                    "expected binary PGM magic P5, found {:?}",
                    String::from_utf8_lossy(other)
                ),
            ))
        }
    }
    let width = p.number(path, "width")?;
    let height = p.number(path, "height")?;
    let maxval = p.number(path, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("invalid maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    let data_start = p.pos + 1;
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let need = width * height * bytes_per_sample;
    if bytes.len() < data_start + need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            what: format!(
                "pixel payload: need {need} bytes, found {}",
                bytes.len().saturating_sub(data_start)
            ),
            offset: bytes.len() as u64,
        });
    }
    let data = &bytes[data_start..data_start + need];
    let scale = 1.0 / maxval as f64;
    let pixels: Vec<f64> = if bytes_per_sample == 1 {
        data.iter().map(|&b| b as f64 * scale).collect()
    } else {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    };
    Image2D::new(width, height, pixels)
}

/// Reads a binary P6 color image; returns (width, height, rgb bytes).
pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut p = HeaderParser::new(&bytes);
    if p.token() != Some(b"P6".as_slice()) {
        return Err(Error::format(path, "expected binary PPM magic P6"));
    }
    let width = p.number(path, "width")?;
    let height = p.number(path, "height")?;
    let maxval = p.number(path, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(path, format!("unsupported maxval {maxval}")));
    }
    let data_start = p.pos + 1;
    let need = width * height * 3;
    if bytes.len() < data_start + need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            what: format!("pixel payload: need {need} bytes"),
            offset: bytes.len() as u64,
        });
    }
    Ok((width, height, bytes[data_start..data_start + need].to_vec()))
}

#[inline]
pub(crate) fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a grayscale image as 8-bit P5, clamping values to [0,1].
pub fn write_pgm(img: &Image2D, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(32 + img.pixels().len());
    out.extend_from_slice(format!("P5\n{} {}\n255\n", img.width(), img.height()).as_bytes());
    out.extend(img.pixels().iter().map(|&v| quantize_u8(v)));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes interleaved RGB bytes as binary P6.
pub fn write_ppm(width: usize, height: usize, rgb: &[u8], path: &Path) -> Result<()> {
    assert_eq!(rgb.len(), width * height * 3, "rgb buffer size mismatch");
    let mut out = Vec::with_capacity(32 + rgb.len());
    out.extend_from_slice(format!("P6\n{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(rgb);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

//! Binary PGM (P5) reader and writer.
//!
//! Header tokens are separated by whitespace and may be interleaved with
//! `#` comments; exactly one whitespace byte separates the maxval from the
//! raster. Only `maxval <= 255` is accepted.

use crate::error::{Error, Result};

/// Decoded 8-bit raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u8>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_blank(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.data.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_blank();
        let start = self.pos;
        while self
            .data
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit())
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedPgm(format!("missing {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedPgm(format!("bad {what}")))
    }
}

pub fn decode(data: &[u8]) -> Result<Gray8> {
    if data.len() < 2 || &data[..2] != b"P5" {
        return Err(Error::MalformedPgm("missing P5 magic".into()));
    }
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedPgm(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedPgm(format!("maxval {maxval} out of range")));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedImage(format!(
            "16-bit PGM (maxval {maxval}) unsupported bit depth"
        )));
    }
    match data.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::MalformedPgm("truncated header".into())),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedPgm("dimensions overflow".into()))?;
    let raster = &data[cur.pos..];
    if raster.len() < n {
        return Err(Error::MalformedPgm(format!(
            "raster has {} bytes, expected {n}",
            raster.len()
        )));
    }
    let pixels = raster[..n].to_vec();
    if let Some(&bad) = pixels.iter().find(|&&p| p as usize > maxval) {
        return Err(Error::MalformedPgm(format!(
            "sample {bad} exceeds maxval {maxval}"
        )));
    }
    Ok(Gray8 {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

/// Encodes with a minimal `P5\n<w> <h>\n255\n` header.
pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::shape(
            format!("{} bytes", width * height),
            format!("{} bytes", pixels.len()),
        ));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

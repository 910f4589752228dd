//! Binary PPM (P6) and PGM (P5) codecs, 8-bit samples only.
//!
//! Bytes map linearly onto the `[0,1]` reals of [`ImageRgb`]/[`GrayMap`]:
//! encoding rounds `v·255` to the nearest byte, so a save→load round trip
//! moves no value by more than half a quantization step (≤ 1/510).
//!
//! The decoders are total: any byte string either parses or returns a
//! descriptive error, and nothing is allocated beyond a constant multiple of
//! the input length (payload size is validated against the header before the
//! pixel buffer is built).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{GrayMap, ImageRgb};

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Header scanner: whitespace- and comment-tolerant integer fields after the
/// two-byte magic, terminated by the single whitespace byte that precedes
/// the payload.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self, field: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value * 10 + u64::from(b - b'0');
            if value > u64::from(u32::MAX) {
                return Err(Error::MalformedHeader(format!("{field} out of range")));
            }
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::MalformedHeader(format!("missing {field}")));
        }
        Ok(value as u32)
    }

    /// Exactly one whitespace byte separates the maxval from the payload.
    fn expect_payload_separator(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(Error::MalformedHeader("expected whitespace before payload".into())),
            None => Err(Error::MalformedHeader("header ends before payload".into())),
        }
    }
}

/// Parse a P5/P6 header; returns (width, height, payload offset).
fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::MalformedHeader(format!(
            "expected magic {:?}",
            std::str::from_utf8(magic).expect("ascii magic")
        )));
    }
    match bytes.get(2) {
        Some(b) if b.is_ascii_whitespace() || *b == b'#' => {}
        _ => return Err(Error::MalformedHeader("magic not followed by whitespace".into())),
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.next_uint("width")?;
    let height = cur.next_uint("height")?;
    let maxval = cur.next_uint("maxval")?;
    cur.expect_payload_separator()?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("zero image extent {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedDepth(maxval));
    }
    Ok((width as usize, height as usize, cur.pos))
}

fn payload(bytes: &[u8], offset: usize, w: usize, h: usize, samples_per_pixel: usize) -> Result<&[u8]> {
    let expected = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(samples_per_pixel))
        .ok_or_else(|| Error::MalformedHeader("image dimensions overflow".into()))?;
    let got = bytes.len() - offset;
    if got < expected {
        return Err(Error::TruncatedPayload { expected, got });
    }
    // Trailing bytes (e.g. a final newline some writers add) are tolerated.
    Ok(&bytes[offset..offset + expected])
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageRgb> {
    let (w, h, off) = parse_header(bytes, b"P6")?;
    let raw = payload(bytes, off, w, h, 3)?;
    let mut img = ImageRgb::new(h, w)?;
    for (dst, &b) in img.data_mut().iter_mut().zip(raw) {
        *dst = f64::from(b) / 255.0;
    }
    Ok(img)
}

pub fn encode_ppm(img: &ImageRgb) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayMap> {
    let (w, h, off) = parse_header(bytes, b"P5")?;
    let raw = payload(bytes, off, w, h, 1)?;
    let mut map = GrayMap::new(h, w)?;
    for (dst, &b) in map.data_mut().iter_mut().zip(raw) {
        *dst = f64::from(b) / 255.0;
    }
    Ok(map)
}

pub fn encode_pgm(map: &GrayMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(map.data().iter().map(|&v| quantize(v)));
    out
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_ppm(&bytes)
}

pub fn save_image(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_pgm(&bytes)
}

pub fn save_gray(map: &GrayMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(map)).map_err(|e| Error::io(path.display().to_string(), e))
}

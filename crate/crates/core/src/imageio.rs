//! PGM images and the raw tensor file format.
//!
//! Tensor files are an ASCII header line `NDTENSOR <ndim> <d_1> ... <d_n>\n`
//! followed by the vectorized data as little-endian IEEE-754 doubles. Tokens
//! are separated by single spaces.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

const TENSOR_MAGIC: &str = "NDTENSOR";
const MAX_HEADER: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmEncoding {
    /// P2
    Ascii,
    /// P5
    Binary,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Tensor<f64>> {
    decode_pgm(&fs::read(path)?)
}

/// Writes an 8-bit binary PGM. See [`encode_pgm`].
pub fn write_pgm(t: &Tensor<f64>, path: impl AsRef<Path>, clamp: bool) -> Result<()> {
    fs::write(path, encode_pgm(t, clamp, PgmEncoding::Binary)?)?;
    Ok(())
}

/// Parses a P2 or P5 graymap into a `height x width` tensor of raw sample
/// values in `0..=maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor<f64>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let encoding = match bytes.get(..2) {
        Some(b"P2") => PgmEncoding::Ascii,
        Some(b"P5") => PgmEncoding::Binary,
        _ => return format_err("missing P2/P5 magic"),
    };
    cur.pos = 2;
    if !cur.peek().is_some_and(|b| b.is_ascii_whitespace()) {
        return format_err("magic must be followed by whitespace");
    }
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return format_err(format!("empty image {width}x{height}"));
    }
    if maxval == 0 || maxval > 65535 {
        return format_err(format!("maxval {maxval} outside 1..=65535"));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;

    let mut data = Vec::with_capacity(count.min(bytes.len()));
    match encoding {
        PgmEncoding::Binary => {
            // Exactly one whitespace byte separates the header from the raster.
            match cur.peek() {
                Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
                _ => return format_err("missing whitespace after maxval"),
            }
            let width_bytes = if maxval < 256 { 1 } else { 2 };
            let raster = &bytes[cur.pos..];
            let needed = count
                .checked_mul(width_bytes)
                .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
            if raster.len() < needed {
                return format_err(format!(
                    "truncated raster: {} of {needed} bytes",
                    raster.len()
                ));
            }
            for i in 0..count {
                let v = if width_bytes == 1 {
                    raster[i] as usize
                } else {
                    u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as usize
                };
                if v > maxval {
                    return format_err(format!("sample {v} exceeds maxval {maxval}"));
                }
                data.push(v as f64);
            }
        }
        PgmEncoding::Ascii => {
            for i in 0..count {
                let v = match cur.token()? {
                    Some(tok) => parse_decimal(tok, "sample")?,
                    None => return format_err(format!("truncated raster: {i} of {count} samples")),
                };
                if v > maxval {
                    return format_err(format!("sample {v} exceeds maxval {maxval}"));
                }
                data.push(v as f64);
            }
            if cur.token()?.is_some() {
                return format_err("trailing data after raster");
            }
        }
    }
    Tensor::from_vec(Shape::new(vec![height, width])?, data)
}

/// Encodes a 2-d tensor as an 8-bit graymap, rounding half to even.
///
/// With `clamp` values are saturated to `[0, 255]`; without it any value
/// that rounds outside that range is an error.
pub fn encode_pgm(t: &Tensor<f64>, clamp: bool, encoding: PgmEncoding) -> Result<Vec<u8>> {
    if t.ndim() != 2 {
        return Err(Error::Shape(format!("PGM needs a 2-d tensor, got shape {}", t.shape())));
    }
    let (height, width) = (t.shape().extent(0), t.shape().extent(1));
    let mut samples = Vec::with_capacity(t.len());
    for (index, &v) in t.vectorize().iter().enumerate() {
        let r = v.round_ties_even();
        let s = if clamp && !r.is_nan() {
            r.clamp(0.0, 255.0)
        } else if (0.0..=255.0).contains(&r) {
            r
        } else {
            return Err(Error::OutOfRange { value: v, index, max: 255 });
        };
        samples.push(s as u8);
    }
    let mut out = Vec::with_capacity(samples.len() * 4 + 32);
    match encoding {
        PgmEncoding::Binary => {
            out.extend_from_slice(format!("P5\n{width} {height}\n255\n").as_bytes());
            out.extend_from_slice(&samples);
        }
        PgmEncoding::Ascii => {
            out.extend_from_slice(format!("P2\n{width} {height}\n255\n").as_bytes());
            for row in samples.chunks(width) {
                let line: Vec<String> = row.iter().map(|s| s.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    Ok(out)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor<f64>> {
    decode_tensor(&fs::read(path)?)
}

pub fn write_tensor(t: &Tensor<f64>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_tensor(t))?;
    Ok(())
}

pub fn encode_tensor(t: &Tensor<f64>) -> Vec<u8> {
    let mut header = format!("{TENSOR_MAGIC} {}", t.ndim());
    for d in t.shape().extents() {
        header.push_str(&format!(" {d}"));
    }
    header.push('\n');
    let mut out = Vec::with_capacity(header.len() + 8 * t.len());
    out.extend_from_slice(header.as_bytes());
    for v in t.vectorize() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor<f64>> {
    let newline = match bytes.iter().take(MAX_HEADER).position(|&b| b == b'\n') {
        Some(p) => p,
        None => return format_err("no header line terminator"),
    };
    let header = std::str::from_utf8(&bytes[..newline])
        .ok()
        .filter(|h| h.is_ascii())
        .ok_or_else(|| Error::Format("header is not ASCII".into()))?;
    let mut tokens = header.split(' ');
    if tokens.next() != Some(TENSOR_MAGIC) {
        return format_err("bad magic, expected NDTENSOR");
    }
    let ndim = match tokens.next() {
        Some(tok) => parse_decimal(tok, "ndim")?,
        None => return format_err("missing ndim"),
    };
    if ndim == 0 {
        return format_err("ndim must be at least 1");
    }
    let extents = tokens
        .map(|tok| parse_decimal(tok, "extent"))
        .collect::<Result<Vec<_>>>()?;
    if extents.len() != ndim {
        return format_err(format!("header declares {ndim} dims but lists {}", extents.len()));
    }
    let shape = Shape::new(extents).map_err(|e| Error::Format(e.to_string()))?;
    let payload = &bytes[newline + 1..];
    let expected = shape
        .len()
        .checked_mul(8)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if payload.len() != expected {
        return Err(Error::Length { expected, found: payload.len() });
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::from_vec(shape, data)
}

fn parse_decimal(tok: &str, what: &str) -> Result<usize> {
    if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
        return format_err(format!("{what} {tok:?} is not a decimal integer"));
    }
    tok.parse()
        .map_err(|_| Error::Format(format!("{what} {tok:?} is out of range")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Result<Option<&'a str>> {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(b) = self.peek() {
                        self.pos += 1;
                        if b == b'\n' || b == b'\r' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Ok(None),
            }
        }
        let start = self.pos;
        while self.peek().is_some_and(|b| !b.is_ascii_whitespace() && b != b'#') {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map(Some)
            .map_err(|_| Error::Format("non-ASCII token".into()))
    }

    fn header_number(&mut self, what: &str) -> Result<usize> {
        match self.token()? {
            Some(tok) => parse_decimal(tok, what),
            None => format_err(format!("header ends before {what}")),
        }
    }
}

//! Image and mask files.
//!
//! - PGM (binary `P5`), 8-bit or 16-bit big-endian samples. Values are mapped
//!   onto the `[0, 255]` real scale by `255 / maxval` when loading; when
//!   saving they are clipped to range and rounded half-to-even.
//! - raw-f64: little-endian `f64` samples in row-major order with a sidecar
//!   JSON header `{"width":W,"height":H}` stored next to the data file as
//!   `<path>.json`. This format is lossless.
//! - Mask files: JSON `{"width":W,"height":H,"indices":[...]}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{checked_area, Image, SamplingMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageFormat {
    Pgm8,
    Pgm16,
    RawF64,
}

impl ImageFormat {
    /// Guesses the format from the file extension: `.pgm` is 8-bit PGM,
    /// anything else raw-f64.
    pub fn from_path(path: &Path) -> ImageFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("pgm") => ImageFormat::Pgm8,
            _ => ImageFormat::RawF64,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    width: usize,
    height: usize,
}

/// Path of the JSON sidecar belonging to a raw-f64 data file.
pub fn raw_header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn load_image(path: impl AsRef<Path>, format: ImageFormat) -> Result<Image> {
    let path = path.as_ref();
    match format {
        ImageFormat::Pgm8 | ImageFormat::Pgm16 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_pgm(&bytes, path)
        }
        ImageFormat::RawF64 => load_raw(path),
    }
}

pub fn save_image(img: &Image, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    if let Some(index) = img.first_non_finite() {
        return Err(Error::NonFinite { index });
    }
    match format {
        ImageFormat::Pgm8 => write_bytes(path, &encode_pgm(img, 255)),
        ImageFormat::Pgm16 => write_bytes(path, &encode_pgm(img, 65535)),
        ImageFormat::RawF64 => {
            let mut data = Vec::with_capacity(img.len() * 8);
            for p in img.pixels() {
                data.extend_from_slice(&p.to_le_bytes());
            }
            write_bytes(path, &data)?;
            let header = RawHeader {
                width: img.width(),
                height: img.height(),
            };
            write_json(raw_header_path(path), &header)
        }
    }
}

fn load_raw(path: &Path) -> Result<Image> {
    let header_path = raw_header_path(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: RawHeader = serde_json::from_str(&text).map_err(|e| Error::MalformedHeader {
        path: header_path.clone(),
        reason: e.to_string(),
    })?;
    if header.width == 0 || header.height == 0 {
        return Err(Error::MalformedHeader {
            path: header_path,
            reason: format!("non-positive dimensions {}x{}", header.width, header.height),
        });
    }
    let n = checked_area(header.width, header.height)?;
    let expected = n
        .checked_mul(8)
        .ok_or_else(|| Error::DimensionOverflow(format!("{}x{}", header.width, header.height)))?;
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    if data.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: data.len(),
        });
    }
    let pixels = data[..expected]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Image::new(header.width, header.height, pixels)
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Decodes a binary PGM. `path` is only used in error messages.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut pos = 0usize;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(malformed(path, "missing P5 magic"));
    }
    pos += 2;

    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while let Some(&c) = bytes.get(pos) {
                        pos += 1;
                        if c == b'\n' || c == b'\r' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, format!("expected header field {}", i + 1)));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::DimensionOverflow(format!("header value {text}")))?;
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed(path, "expected whitespace after maxval")),
    }

    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(malformed(path, format!("non-positive dimensions {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed(path, format!("maxval {maxval} outside 1..=65535")));
    }
    let n = checked_area(width, height)?;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let expected = n
        .checked_mul(sample_bytes)
        .ok_or_else(|| Error::DimensionOverflow(format!("{width}x{height}")))?;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: data.len(),
        });
    }
    let scale = 255.0 / maxval as f64;
    let pixels: Vec<f64> = if sample_bytes == 1 {
        data[..n]
            .iter()
            .map(|&b| if maxval == 255 { b as f64 } else { b as f64 * scale })
            .collect()
    } else {
        data[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * 255.0 / maxval as f64)
            .collect()
    };
    Image::new(width, height, pixels)
}

pub fn encode_pgm(img: &Image, maxval: u16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    let scale = maxval as f64 / 255.0;
    for &p in img.pixels() {
        let v = (p.clamp(0.0, 255.0) * scale).round_ties_even().clamp(0.0, maxval as f64);
        if maxval < 256 {
            out.push(v as u8);
        } else {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    }
    out
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<SamplingMask> {
    read_json(path)
}

pub fn save_mask(mask: &SamplingMask, path: impl AsRef<Path>) -> Result<()> {
    write_json(path, mask)
}

fn write_bytes(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Writes pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Runtime(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Reads JSON, reporting schema problems as config errors with line and
/// column.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

//! Grayscale PFM (`Pf`, 32-bit float) and binary PGM (`P5`, 8-bit) files.

use std::fs;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

/// Splits `count` whitespace-separated header tokens off the front of `bytes`,
/// skipping `#` comments. Returns the tokens and the payload offset (one
/// whitespace byte after the last token).
fn header_tokens(bytes: &[u8], count: usize, path: &Path) -> Result<(Vec<String>, usize)> {
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(malformed("header ends early"));
        }
        let token = std::str::from_utf8(&bytes[start..i]).map_err(|_| malformed("non-ascii header"))?;
        tokens.push(token.to_string());
    }
    if i >= bytes.len() {
        // A header with no trailing whitespace still may precede an empty payload.
        return Ok((tokens, bytes.len()));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(token: &str, path: &Path) -> Result<usize> {
    match token.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("bad dimension `{token}`"),
        }),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (tokens, offset) = header_tokens(&bytes, 4, path)?;
    match tokens[0].as_str() {
        "Pf" => {}
        "PF" => {
            return Err(Error::UnsupportedVariant {
                path: path.to_path_buf(),
                variant: "PF (color)".into(),
            })
        }
        other => {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("bad magic `{other}`"),
            })
        }
    }
    let width = parse_dim(&tokens[1], path)?;
    let height = parse_dim(&tokens[2], path)?;
    let scale: f64 = tokens[3].parse().map_err(|_| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: format!("bad scale `{}`", tokens[3]),
    })?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "scale must be nonzero".into(),
        });
    }
    let little_endian = scale < 0.0;
    let expected = width * height * 4;
    let payload = &bytes[offset..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    let mut data = vec![0.0; width * height];
    for (k, chunk) in payload[..expected].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // Stored bottom row first.
        let (file_row, col) = (k / width, k % width);
        data[(height - 1 - file_row) * width + col] = v as f64;
    }
    Image::new(height, width, None, data)
}

/// Writes a little-endian grayscale PFM. Samples are stored as `f32`.
pub fn write_pfm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = image.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for r in (0..h).rev() {
        for &v in image.row(r) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an 8-bit binary PGM, scaling samples to `[0, 1]` by the file's maxval.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (tokens, offset) = header_tokens(&bytes, 4, path)?;
    match tokens[0].as_str() {
        "P5" => {}
        v @ ("P2" | "P1" | "P3" | "P4" | "P6") => {
            return Err(Error::UnsupportedVariant {
                path: path.to_path_buf(),
                variant: v.to_string(),
            })
        }
        other => {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("bad magic `{other}`"),
            })
        }
    }
    let width = parse_dim(&tokens[1], path)?;
    let height = parse_dim(&tokens[2], path)?;
    let maxval = parse_dim(&tokens[3], path)?;
    if maxval > 255 {
        return Err(Error::UnsupportedVariant {
            path: path.to_path_buf(),
            variant: format!("16-bit PGM (maxval {maxval})"),
        });
    }
    let expected = width * height;
    let payload = &bytes[offset..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    let scale = 1.0 / maxval as f64;
    let data = payload[..expected].iter().map(|&b| b as f64 * scale).collect();
    Image::new(height, width, None, data)
}

/// Quantizes `value / max_value`, clamped to `[0, 1]`, to bytes with
/// round-half-up.
pub fn quantize(value: f64, max_value: f64) -> u8 {
    let v = (value / max_value).clamp(0.0, 1.0);
    (v * 255.0 + 0.5).floor() as u8
}

/// Writes an 8-bit binary PGM; `max_value` is the sample value mapped to 255.
pub fn write_pgm(image: &Image, path: impl AsRef<Path>, max_value: f64) -> Result<()> {
    let path = path.as_ref();
    if !(max_value.is_finite() && max_value > 0.0) {
        return Err(Error::param("max_value", format!("{max_value} must be > 0")));
    }
    let (h, w) = image.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| quantize(v, max_value)));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

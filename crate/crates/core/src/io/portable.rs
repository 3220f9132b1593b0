//! Plain-text label grids (`SSEG`) and binary float fields (`SSEGF`).
//!
//! ```text
//! SSEG 1 <height> <width>
//! <row-major whitespace-separated ids>
//!
//! SSEGF 1 <height> <width> <channels>
//! <height * width * channels little-endian f32, channel fastest>
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{LabelMask, RadialField, ScalarField};

pub const MASK_MAGIC: &str = "SSEG";
pub const FIELD_MAGIC: &str = "SSEGF";
pub const VERSION: u32 = 1;

fn parse_dims<'a>(mut parts: impl Iterator<Item = &'a str>, n: usize, line: &str) -> Result<Vec<usize>> {
    let version = parts.next().ok_or_else(|| Error::MalformedHeader(format!("missing version in '{line}'")))?;
    if version.parse::<u32>().ok() != Some(VERSION) {
        return Err(Error::MalformedHeader(format!("unsupported version '{version}'")));
    }
    let dims: Vec<usize> = parts
        .map(|p| p.parse::<usize>().map_err(|_| Error::MalformedHeader(format!("bad dimension '{p}' in '{line}'"))))
        .collect::<Result<_>>()?;
    if dims.len() != n {
        return Err(Error::MalformedHeader(format!("expected {n} dimensions in '{line}'")));
    }
    Ok(dims)
}

pub fn encode_mask(mask: &LabelMask) -> String {
    let (h, w) = mask.shape();
    let mut out = format!("{MASK_MAGIC} {VERSION} {h} {w}\n");
    for row in mask.data().chunks(w.max(1)).take(h) {
        for (i, id) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{id}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<LabelMask> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::MalformedHeader("not a text grid".into()))?;
    let (line, body) = text.split_once('\n').unwrap_or((text, ""));
    let line = line.trim_end_matches('\r');
    let mut parts = line.split_whitespace();
    if parts.next() != Some(MASK_MAGIC) {
        return Err(Error::MalformedHeader(format!("expected '{MASK_MAGIC}', found '{line}'")));
    }
    let dims = parse_dims(parts, 2, line)?;
    let (h, w) = (dims[0], dims[1]);
    let data: Vec<u32> = body
        .split_whitespace()
        .map(|t| t.parse::<u32>().map_err(|_| Error::MalformedPayload(format!("'{t}' is not an instance id"))))
        .collect::<Result<_>>()?;
    if data.len() != h * w {
        return Err(Error::MalformedPayload(format!(
            "expected {} ids for a {h}x{w} grid, found {}",
            h * w,
            data.len()
        )));
    }
    LabelMask::new(h, w, data)
}

/// Raw field contents: height, width, channels and values.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldData {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl FieldData {
    pub fn from_scalar(f: &ScalarField) -> Self {
        Self {
            height: f.height(),
            width: f.width(),
            channels: 1,
            values: f.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_radial(f: &RadialField) -> Self {
        Self {
            height: f.height(),
            width: f.width(),
            channels: f.rays(),
            values: f.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        if self.channels != 1 {
            return Err(Error::MalformedHeader(format!(
                "expected a single-channel field, found {} channels",
                self.channels
            )));
        }
        ScalarField::new(self.height, self.width, self.values.into_iter().map(f64::from).collect())
    }

    pub fn into_radial(self) -> Result<RadialField> {
        RadialField::new(
            self.height,
            self.width,
            self.channels,
            self.values.into_iter().map(f64::from).collect(),
        )
    }
}

pub fn encode_field(field: &FieldData) -> Vec<u8> {
    let header = format!(
        "{FIELD_MAGIC} {VERSION} {} {} {}\n",
        field.height, field.width, field.channels
    );
    let mut out = Vec::with_capacity(header.len() + 4 * field.values.len());
    out.extend_from_slice(header.as_bytes());
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<FieldData> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing header line".into()))?;
    let line = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::MalformedHeader("header is not text".into()))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(FIELD_MAGIC) {
        return Err(Error::MalformedHeader(format!("expected '{FIELD_MAGIC}', found '{line}'")));
    }
    let dims = parse_dims(parts, 3, line)?;
    let (height, width, channels) = (dims[0], dims[1], dims[2]);
    let payload = &bytes[nl + 1..];
    let n = height * width * channels;
    if payload.len() != 4 * n {
        return Err(Error::MalformedPayload(format!(
            "expected {} bytes of f32 data, found {}",
            4 * n,
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(FieldData {
        height,
        width,
        channels,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_grid_example() {
        let text = "SSEG 1 4 4\n0 0 1 1\n0 2 2 1\n3 3 0 0\n3 3 0 70000\n";
        let m = decode_mask(text.as_bytes()).unwrap();
        assert_eq!(m.shape(), (4, 4));
        assert_eq!(m.get(1, 1), 2);
        assert_eq!(m.get(3, 3), 70000);
        assert_eq!(encode_mask(&m), text);
    }

    #[test]
    fn ids_may_wrap_lines_freely() {
        let m = decode_mask(b"SSEG 1 2 2\n1 2 3 4").unwrap();
        assert_eq!(m.data(), &[1, 2, 3, 4]);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(decode_mask(b"SSEX 1 2 2\n0 0 0 0"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_mask(b"SSEG 2 2 2\n0 0 0 0"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_mask(b"SSEG 1 2\n0 0"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_mask(b"SSEG 1 2 2\n0 0 0"), Err(Error::MalformedPayload(_))));
        assert!(matches!(decode_mask(b"SSEG 1 2 2\n0 0 0 -1"), Err(Error::MalformedPayload(_))));
        assert!(matches!(decode_field(b"SSEGF 1 1 1 1\n\0\0"), Err(Error::MalformedPayload(_))));
        assert!(matches!(decode_field(b"SSEGF 1 1 1\n"), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn field_bytes_round_trip() {
        let f = FieldData {
            height: 2,
            width: 1,
            channels: 3,
            values: vec![0.0, -1.5, f32::MIN_POSITIVE, 3.25, 1e-9, 7.0],
        };
        let bytes = encode_field(&f);
        assert!(bytes.starts_with(b"SSEGF 1 2 1 3\n"));
        let back = decode_field(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(encode_field(&back), bytes);
        assert!(back.clone().into_scalar().is_err());
        assert_eq!(back.into_radial().unwrap().at(1, 0), &[3.25, 1e-9f32 as f64, 7.0]);
    }
}

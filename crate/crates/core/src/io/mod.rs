//! Mask, field and report files.
//!
//! Masks are read and written as 16-bit PNG (`.png`) or as the portable text
//! grid (any other extension). Fields always use the binary `SSEGF` format.

mod config;
mod png;
mod portable;
mod report;

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{LabelMask, RadialField, ScalarField};

pub use self::png::{decode_png, encode_png};
pub use config::{FieldPaths, ImagePaths, RunConfig};
pub use portable::{decode_field, decode_mask, encode_field, encode_mask, FieldData};
pub use report::{config_echo, parse_json_report, report_grid, write_metric_report, ReportFormat};

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_label_mask(path: &Path) -> Result<LabelMask> {
    let bytes = read_bytes(path)?;
    if is_png(path) {
        decode_png(&bytes)
    } else {
        decode_mask(&bytes)
    }
}

pub fn write_label_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    let bytes = if is_png(path) {
        encode_png(mask)?
    } else {
        encode_mask(mask).into_bytes()
    };
    write_bytes(path, &bytes)
}

/// Values are stored as f32; reading back gives the f32-rounded field.
pub fn write_scalar_field(path: &Path, field: &ScalarField) -> Result<()> {
    write_bytes(path, &encode_field(&FieldData::from_scalar(field)))
}

pub fn write_radial_field(path: &Path, field: &RadialField) -> Result<()> {
    write_bytes(path, &encode_field(&FieldData::from_radial(field)))
}

pub fn read_scalar_field(path: &Path) -> Result<ScalarField> {
    decode_field(&read_bytes(path)?)?.into_scalar()
}

pub fn read_radial_field(path: &Path) -> Result<RadialField> {
    decode_field(&read_bytes(path)?)?.into_radial()
}

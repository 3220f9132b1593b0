//! Single-channel grayscale PNG label masks. Writing always produces 16-bit
//! images; reading accepts 8- and 16-bit grayscale.

use std::io::Cursor;

use png::{BitDepth, ColorType, Decoder, Encoder};

use crate::error::{Error, Result};
use crate::grid::LabelMask;

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

pub fn encode_png(mask: &LabelMask) -> Result<Vec<u8>> {
    let (h, w) = mask.shape();
    let mut raw = Vec::with_capacity(2 * h * w);
    for &id in mask.data() {
        let v = u16::try_from(id).map_err(|_| Error::IdTooLarge(id))?;
        raw.extend_from_slice(&v.to_be_bytes());
    }
    let dims = |n: usize| u32::try_from(n).map_err(|_| Error::UnsupportedPng(format!("dimension {n} too large")));
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, dims(w)?, dims(h)?);
        enc.set_color(ColorType::Grayscale);
        enc.set_depth(BitDepth::Sixteen);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&raw).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<LabelMask> {
    let mut reader = Decoder::new(Cursor::new(bytes)).read_info().map_err(png_err)?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if color != ColorType::Grayscale {
        return Err(Error::UnsupportedPng(format!("colour type {color:?}, expected grayscale")));
    }
    if !matches!(depth, BitDepth::Eight | BitDepth::Sixteen) {
        return Err(Error::UnsupportedPng(format!("bit depth {depth:?}, expected 8 or 16")));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::UnsupportedPng("image too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let (h, w) = (frame.height as usize, frame.width as usize);
    let mut data = Vec::with_capacity(h * w);
    for line in buf.chunks(frame.line_size).take(h) {
        match depth {
            BitDepth::Sixteen => data.extend(
                line[..2 * w]
                    .chunks_exact(2)
                    .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]]))),
            ),
            _ => data.extend(line[..w].iter().map(|&v| u32::from(v))),
        }
    }
    LabelMask::new(h, w, data)
}

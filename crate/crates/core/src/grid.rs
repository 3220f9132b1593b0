//! Raster types shared by every stage of the pipeline.
//!
//! All grids are row-major with `(row, col)` indexing and row 0 at the top.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `(row, col)` pixel coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl From<(usize, usize)> for Pixel {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

fn check_len(height: usize, width: usize, len: usize) -> Result<()> {
    if height * width != len {
        return Err(Error::InvalidParameter(format!(
            "{height}x{width} grid needs {} values, got {len}",
            height * width
        )));
    }
    Ok(())
}

pub(crate) fn ensure_same_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

impl BoundingBox {
    pub fn height(&self) -> usize {
        self.max_row - self.min_row + 1
    }

    pub fn width(&self) -> usize {
        self.max_col - self.min_col + 1
    }

    pub fn diagonal(&self) -> f64 {
        (self.height() as f64).hypot(self.width() as f64)
    }

    fn include(&mut self, row: usize, col: usize) {
        self.min_row = self.min_row.min(row);
        self.min_col = self.min_col.min(col);
        self.max_row = self.max_row.max(row);
        self.max_col = self.max_col.max(col);
    }
}

/// Instance label mask. Id 0 is background; ids need not be contiguous.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMask {
    height: usize,
    width: usize,
    data: Vec<u32>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, data: Vec<u32>) -> Result<Self> {
        check_len(height, width, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, id: u32) {
        self.data[row * self.width + col] = id;
    }

    /// Id at a signed coordinate; anything off the grid reads as background.
    #[inline]
    pub fn get_or_background(&self, row: i64, col: i64) -> u32 {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            0
        } else {
            self.data[row as usize * self.width + col as usize]
        }
    }

    /// Sorted distinct instance ids.
    pub fn ids(&self) -> Vec<u32> {
        self.areas().into_keys().collect()
    }

    pub fn instance_count(&self) -> usize {
        self.areas().len()
    }

    /// Pixel count per instance id.
    pub fn areas(&self) -> BTreeMap<u32, usize> {
        let mut out = BTreeMap::new();
        for &id in &self.data {
            if id != 0 {
                *out.entry(id).or_insert(0) += 1;
            }
        }
        out
    }

    pub fn bounding_boxes(&self) -> BTreeMap<u32, BoundingBox> {
        let mut out: BTreeMap<u32, BoundingBox> = BTreeMap::new();
        for r in 0..self.height {
            for c in 0..self.width {
                let id = self.get(r, c);
                if id == 0 {
                    continue;
                }
                out.entry(id)
                    .and_modify(|b| b.include(r, c))
                    .or_insert(BoundingBox {
                        min_row: r,
                        min_col: c,
                        max_row: r,
                        max_col: c,
                    });
            }
        }
        out
    }

    pub fn max_id(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Binary mask of a single instance.
    pub fn instance(&self, id: u32) -> SemanticMask {
        SemanticMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| u8::from(v == id && id != 0)).collect(),
        }
    }

    /// Apply `f` to every id (0 stays 0 unless `f` maps it elsewhere).
    pub fn map_ids(&self, mut f: impl FnMut(u32) -> u32) -> LabelMask {
        LabelMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Binary mask with values exactly 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SemanticMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl SemanticMask {
    /// Fails if any value is not 0 or 1.
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_len(height, width, data.len())?;
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidParameter(format!(
                "semantic mask values must be 0 or 1, found {v}"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(u8::from(f(r, c)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = u8::from(value);
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn union(&self, other: &SemanticMask) -> Result<SemanticMask> {
        ensure_same_shape(self.shape(), other.shape())?;
        Ok(SemanticMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect(),
        })
    }
}

/// Per-pixel real values.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_len(height, width, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// K radial distances per pixel, stored pixel-major (`[pixel][ray]`).
#[derive(Clone, Debug, PartialEq)]
pub struct RadialField {
    height: usize,
    width: usize,
    rays: usize,
    data: Vec<f64>,
}

impl RadialField {
    pub fn new(height: usize, width: usize, rays: usize, data: Vec<f64>) -> Result<Self> {
        if rays < 3 {
            return Err(Error::DegenerateRayCount(rays));
        }
        if data.len() != height * width * rays {
            return Err(Error::InvalidParameter(format!(
                "{height}x{width}x{rays} radial field needs {} values, got {}",
                height * width * rays,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            rays,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, rays: usize) -> Result<Self> {
        Self::new(height, width, rays, vec![0.0; height * width * rays])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rays(&self) -> usize {
        self.rays
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.rays;
        &self.data[start..start + self.rays]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.rays;
        &mut self.data[start..start + self.rays]
    }
}

/// Grids of per-pixel weights in `[0, 1]`: hard masks or their soft surrogates.
pub trait MaskWeights {
    fn shape(&self) -> (usize, usize);
    fn weight(&self, index: usize) -> f64;
}

impl MaskWeights for SemanticMask {
    fn shape(&self) -> (usize, usize) {
        SemanticMask::shape(self)
    }

    #[inline]
    fn weight(&self, index: usize) -> f64 {
        f64::from(self.data[index])
    }
}

impl MaskWeights for ScalarField {
    fn shape(&self) -> (usize, usize) {
        ScalarField::shape(self)
    }

    #[inline]
    fn weight(&self, index: usize) -> f64 {
        self.data[index]
    }
}

/// 1 wherever the label mask is non-zero.
pub fn to_semantic(mask: &LabelMask) -> SemanticMask {
    SemanticMask {
        height: mask.height,
        width: mask.width,
        data: mask.data.iter().map(|&v| u8::from(v > 0)).collect(),
    }
}

pub fn invert(mask: &SemanticMask) -> SemanticMask {
    SemanticMask {
        height: mask.height,
        width: mask.width,
        data: mask.data.iter().map(|&v| 1 - v).collect(),
    }
}

/// Number of pixels set in both masks.
pub fn masked_product_sum(a: &SemanticMask, b: &SemanticMask) -> Result<usize> {
    ensure_same_shape(a.shape(), b.shape())?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .filter(|(&x, &y)| x & y != 0)
        .count())
}

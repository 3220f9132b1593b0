use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Pixel, RadialField, SemanticMask};

/// Unit step `(d_row, d_col)` for ray `k` of `rays`.
///
/// Ray 0 points east (+col); angles grow counter-clockwise with north being
/// decreasing row.
#[inline]
pub fn ray_direction(k: usize, rays: usize) -> (f64, f64) {
    let theta = 2.0 * PI * k as f64 / rays as f64;
    (-theta.sin(), theta.cos())
}

/// Star-convex polygon: a centre pixel plus K radii at equispaced angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarPolygon {
    centre: Pixel,
    radii: Vec<f64>,
}

/// A run of set pixels `[col_start, col_end)` on one row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub row: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.col_end - self.col_start
    }

    pub fn is_empty(&self) -> bool {
        self.col_end == self.col_start
    }
}

impl StarPolygon {
    pub fn new(centre: Pixel, radii: Vec<f64>) -> Result<Self> {
        if radii.len() < 3 {
            return Err(Error::DegenerateRayCount(radii.len()));
        }
        if let Some(r) = radii.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "polygon radii must be finite and non-negative, got {r}"
            )));
        }
        Ok(Self { centre, radii })
    }

    pub fn centre(&self) -> Pixel {
        self.centre
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn rays(&self) -> usize {
        self.radii.len()
    }

    /// Vertices as `(row, col)` in ray order.
    pub fn vertices(&self) -> Vec<(f64, f64)> {
        let k = self.radii.len() as f64;
        let (cr, cc) = (self.centre.row as f64, self.centre.col as f64);
        self.radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let t = 2.0 * PI * i as f64 / k;
                (cr - r * t.sin(), cc + r * t.cos())
            })
            .collect()
    }

    /// Row spans of pixel centres inside the polygon (even-odd rule), clipped
    /// to a `height` x `width` grid. Spans come out sorted by row then column.
    pub fn spans(&self, height: usize, width: usize) -> Vec<Span> {
        let verts = self.vertices();
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(y, _) in &verts {
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        let mut spans = Vec::new();
        if height == 0 || width == 0 || max_y < 0.0 || min_y > (height - 1) as f64 {
            return spans;
        }
        let row_lo = min_y.ceil().max(0.0) as usize;
        let row_hi = (max_y.floor() as usize).min(height - 1);
        let n = verts.len();
        let mut xs: Vec<f64> = Vec::with_capacity(8);
        for row in row_lo..=row_hi {
            let y = row as f64;
            xs.clear();
            let mut j = n - 1;
            for i in 0..n {
                let (yi, xi) = verts[i];
                let (yj, xj) = verts[j];
                if (yi > y) != (yj > y) {
                    xs.push((xj - xi) * (y - yi) / (yj - yi) + xi);
                }
                j = i;
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                let start = pair[0].ceil().max(0.0);
                let end = pair[1].ceil().min(width as f64);
                if end > start {
                    spans.push(Span {
                        row,
                        col_start: start as usize,
                        col_end: end as usize,
                    });
                }
            }
        }
        spans
    }
}

/// Polygon anchored at `pixel` using that pixel's radii.
pub fn polygon_from_fields(pixel: Pixel, r: &RadialField) -> Result<StarPolygon> {
    if pixel.row >= r.height() || pixel.col >= r.width() {
        return Err(Error::OutOfBounds {
            row: pixel.row,
            col: pixel.col,
            height: r.height(),
            width: r.width(),
        });
    }
    StarPolygon::new(pixel, r.at(pixel.row, pixel.col).to_vec())
}

/// Render a polygon to a `height` x `width` binary mask.
pub fn rasterize(poly: &StarPolygon, height: usize, width: usize) -> SemanticMask {
    let mut mask = SemanticMask::zeros(height, width);
    for s in poly.spans(height, width) {
        for c in s.col_start..s.col_end {
            mask.set(s.row, c, true);
        }
    }
    mask
}

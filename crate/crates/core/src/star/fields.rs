use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{LabelMask, Pixel, RadialField, ScalarField};
use crate::star::polygon::ray_direction;

/// Spacing of samples along a ray, in pixels.
pub const RAY_STEP: f64 = 0.5;

/// Nearest integer, with exact halves resolved toward zero.
///
/// Sampling offsets from a centre pixel with this rule keeps ray lengths
/// symmetric under 90 degree rotations and reflections.
#[inline]
pub(crate) fn round_toward_origin(v: f64) -> i64 {
    let m = (v.abs() - 0.5).ceil();
    if v < 0.0 {
        -(m as i64)
    } else {
        m as i64
    }
}

const INF: f64 = 1e20;

/// Squared 1-D distance transform of a sampled function (lower envelope of
/// parabolas). `f` is read, `out` written; both of length n.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        // z[0] is -inf, so k never underflows
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Raw Euclidean distance from each pixel of instance `id` to the nearest pixel
/// with a different id, evaluated on the instance's bounding box grown by one
/// pixel. Cells beyond the grid count as background.
fn instance_distances(mask: &LabelMask, id: u32, bbox: crate::grid::BoundingBox) -> Vec<(usize, f64)> {
    let r0 = bbox.min_row as i64 - 1;
    let c0 = bbox.min_col as i64 - 1;
    let h = bbox.height() + 2;
    let w = bbox.width() + 2;
    let mut grid = vec![0.0f64; h * w];
    for r in 0..h {
        for c in 0..w {
            let same = mask.get_or_background(r0 + r as i64, c0 + c as i64) == id;
            grid[r * w + c] = if same { INF } else { 0.0 };
        }
    }
    let n = h.max(w);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    let mut res = Vec::new();
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let gr = (r0 + r as i64) as usize;
            let gc = (c0 + c as i64) as usize;
            if mask.get(gr, gc) == id {
                res.push((gr * mask.width() + gc, grid[r * w + c].sqrt()));
            }
        }
    }
    res
}

/// Unnormalised distance to the nearest pixel of another id (or background).
pub fn raw_boundary_distance(mask: &LabelMask) -> ScalarField {
    let boxes: Vec<_> = mask.bounding_boxes().into_iter().collect();
    let per_instance: Vec<Vec<(usize, f64)>> = boxes
        .par_iter()
        .map(|&(id, bbox)| instance_distances(mask, id, bbox))
        .collect();
    let mut field = ScalarField::zeros(mask.height(), mask.width());
    let data = field.data_mut();
    for inst in per_instance {
        for (idx, d) in inst {
            data[idx] = d;
        }
    }
    field
}

/// Boundary-distance field `d`: each instance's distances divided by that
/// instance's maximum, so every instance peaks at exactly 1. Background is 0.
pub fn boundary_distance_field(mask: &LabelMask) -> ScalarField {
    let boxes: Vec<_> = mask.bounding_boxes().into_iter().collect();
    let per_instance: Vec<Vec<(usize, f64)>> = boxes
        .par_iter()
        .map(|&(id, bbox)| {
            let mut dist = instance_distances(mask, id, bbox);
            let max = dist.iter().map(|&(_, d)| d).fold(0.0f64, f64::max);
            for (_, d) in dist.iter_mut() {
                *d /= max;
            }
            dist
        })
        .collect();
    let mut field = ScalarField::zeros(mask.height(), mask.width());
    let data = field.data_mut();
    for inst in per_instance {
        for (idx, d) in inst {
            data[idx] = d;
        }
    }
    field
}

/// Radial distances of one pixel along `rays` equispaced directions.
///
/// Each ray advances in [`RAY_STEP`] increments and samples the nearest pixel
/// (halves rounded toward the start). The reported length is the distance of
/// the last sample still inside the start pixel's instance. Background pixels
/// get all-zero rays.
pub fn rays_at(mask: &LabelMask, pixel: Pixel, rays: usize) -> Result<Vec<f64>> {
    if rays < 3 {
        return Err(Error::DegenerateRayCount(rays));
    }
    if pixel.row >= mask.height() || pixel.col >= mask.width() {
        return Err(Error::OutOfBounds {
            row: pixel.row,
            col: pixel.col,
            height: mask.height(),
            width: mask.width(),
        });
    }
    let dirs: Vec<(f64, f64)> = (0..rays).map(|k| ray_direction(k, rays)).collect();
    let mut out = vec![0.0; rays];
    march(mask, pixel, &dirs, &mut out);
    Ok(out)
}

fn march(mask: &LabelMask, pixel: Pixel, dirs: &[(f64, f64)], out: &mut [f64]) {
    let id = mask.get(pixel.row, pixel.col);
    if id == 0 {
        out.fill(0.0);
        return;
    }
    let (r0, c0) = (pixel.row as i64, pixel.col as i64);
    for (o, &(dr, dc)) in out.iter_mut().zip(dirs) {
        let mut step = 1u32;
        loop {
            let t = RAY_STEP * f64::from(step);
            let rr = r0 + round_toward_origin(t * dr);
            let cc = c0 + round_toward_origin(t * dc);
            if mask.get_or_background(rr, cc) != id {
                *o = t - RAY_STEP;
                break;
            }
            step += 1;
        }
    }
}

/// Radial field `r^k` for every pixel of the mask.
pub fn radial_field(mask: &LabelMask, rays: usize) -> Result<RadialField> {
    if rays < 3 {
        return Err(Error::DegenerateRayCount(rays));
    }
    let (h, w) = mask.shape();
    let dirs: Vec<(f64, f64)> = (0..rays).map(|k| ray_direction(k, rays)).collect();
    let mut data = vec![0.0; h * w * rays];
    if w > 0 {
        data.par_chunks_mut(w * rays).enumerate().for_each(|(row, chunk)| {
            for (col, out) in chunk.chunks_mut(rays).enumerate() {
                march(mask, Pixel::new(row, col), &dirs, out);
            }
        });
    }
    RadialField::new(h, w, rays, data)
}

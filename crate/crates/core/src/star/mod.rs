//! Star-convex polygons and the ground-truth fields they are built from.

mod convexity;
mod fields;
mod polygon;

pub use convexity::is_star_convex;
pub use fields::{
    boundary_distance_field, radial_field, rays_at, raw_boundary_distance, RAY_STEP,
};
pub use polygon::{polygon_from_fields, rasterize, ray_direction, Span, StarPolygon};

use crate::grid::{LabelMask, Pixel, ScalarField};

/// Highest-`d` pixel of every instance (ties go to the first in row-major order).
pub fn argmax_pixels(mask: &LabelMask, d: &ScalarField) -> Vec<(u32, Pixel)> {
    let mut best: std::collections::BTreeMap<u32, (f64, Pixel)> = Default::default();
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            let id = mask.get(r, c);
            if id == 0 {
                continue;
            }
            let v = d.get(r, c);
            best.entry(id)
                .and_modify(|e| {
                    if v > e.0 {
                        *e = (v, Pixel::new(r, c));
                    }
                })
                .or_insert((v, Pixel::new(r, c)));
        }
    }
    best.into_iter().map(|(id, (_, p))| (id, p)).collect()
}

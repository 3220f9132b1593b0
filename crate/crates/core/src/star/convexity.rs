use crate::error::{Error, Result};
use crate::grid::{Pixel, SemanticMask};
use crate::star::fields::round_toward_origin;

/// Discrete star-convexity test.
///
/// Walks the segment from `centre` to every set pixel at no more than half a
/// pixel spacing, rounding each sample to the nearest pixel (halves toward the
/// centre). The mask is star-convex about `centre` iff every sample is set.
pub fn is_star_convex(mask: &SemanticMask, centre: Pixel) -> Result<bool> {
    let (h, w) = mask.shape();
    if centre.row >= h || centre.col >= w || !mask.get(centre.row, centre.col) {
        return Err(Error::InvalidStarCentre {
            row: centre.row,
            col: centre.col,
        });
    }
    let (cr, cc) = (centre.row as i64, centre.col as i64);
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let dr = r as f64 - cr as f64;
            let dc = c as f64 - cc as f64;
            let steps = (2.0 * dr.hypot(dc)).ceil() as usize;
            for i in 1..steps {
                let t = i as f64 / steps as f64;
                let sr = cr + round_toward_origin(t * dr);
                let sc = cc + round_toward_origin(t * dc);
                if !mask.get(sr as usize, sc as usize) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

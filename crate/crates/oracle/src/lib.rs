//! Slow, obviously-correct reference computations.
//!
//! Everything here works on plain slices and tuples so that it shares no code
//! with `nestseg-core`. Tests compute expected values with these functions and
//! compare them against the optimized implementations.

/// Euclidean distance from every foreground pixel to the nearest pixel carrying
/// a different id. The one-pixel ring just outside the grid counts as
/// background. Background pixels get 0.
///
/// O(N^2): scans every pixel for every pixel.
pub fn brute_boundary_distance(ids: &[u32], height: usize, width: usize) -> Vec<f64> {
    assert_eq!(ids.len(), height * width);
    let mut out = vec![0.0; ids.len()];
    for r in 0..height {
        for c in 0..width {
            let id = ids[r * width + c];
            if id == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            // ring outside the grid
            for rr in -1..=height as i64 {
                for cc in -1..=width as i64 {
                    let inside = rr >= 0 && cc >= 0 && rr < height as i64 && cc < width as i64;
                    let other = if inside {
                        ids[rr as usize * width + cc as usize]
                    } else {
                        0
                    };
                    if other != id {
                        let dr = rr as f64 - r as f64;
                        let dc = cc as f64 - c as f64;
                        best = best.min((dr * dr + dc * dc).sqrt());
                    }
                }
            }
            out[r * width + c] = best;
        }
    }
    out
}

/// Per-instance normalisation of a raw distance map (max per id becomes 1).
pub fn normalise_per_instance(ids: &[u32], raw: &[f64]) -> Vec<f64> {
    let mut max = std::collections::HashMap::new();
    for (&id, &v) in ids.iter().zip(raw) {
        if id != 0 {
            let e = max.entry(id).or_insert(0.0f64);
            *e = e.max(v);
        }
    }
    ids.iter()
        .zip(raw)
        .map(|(&id, &v)| if id == 0 { 0.0 } else { v / max[&id] })
        .collect()
}

/// Classic crossing-number point-in-polygon test. Vertices and point are
/// `(x, y)` = `(col, row)`.
pub fn pnpoly(vertices: &[(f64, f64)], point: (f64, f64)) -> bool {
    let (x, y) = point;
    let n = vertices.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (xi, yi) = vertices[i];
        let (xj, yj) = vertices[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Rasterize by testing every pixel centre with [`pnpoly`].
pub fn brute_rasterize(vertices: &[(f64, f64)], height: usize, width: usize) -> Vec<u8> {
    let mut out = vec![0u8; height * width];
    for r in 0..height {
        for c in 0..width {
            if pnpoly(vertices, (c as f64, r as f64)) {
                out[r * width + c] = 1;
            }
        }
    }
    out
}

/// Vertices `(col, row)` of a star polygon with ray `k` at angle `2πk/K`,
/// east first, counter-clockwise with north = decreasing row.
pub fn star_vertices(centre: (f64, f64), radii: &[f64]) -> Vec<(f64, f64)> {
    let k = radii.len() as f64;
    radii
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / k;
            (centre.1 + r * t.cos(), centre.0 - r * t.sin())
        })
        .collect()
}

/// Area of a regular K-gon with circumradius `r`.
pub fn regular_polygon_area(k: usize, r: f64) -> f64 {
    0.5 * k as f64 * r * r * (2.0 * std::f64::consts::PI / k as f64).sin()
}

/// IoU of the pixel sets `a == id_a` and `b == id_b`.
pub fn brute_iou(a: &[u32], id_a: u32, b: &[u32], id_b: u32) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let in_a = x == id_a;
        let in_b = y == id_b;
        if in_a && in_b {
            inter += 1;
        }
        if in_a || in_b {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Sorted distinct non-zero ids.
pub fn ids_of(mask: &[u32]) -> Vec<u32> {
    let mut ids: Vec<u32> = mask.iter().copied().filter(|&v| v != 0).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Best one-to-one assignment by exhaustive search.
///
/// `iou[g][p]` is the IoU between ground-truth `g` and prediction `p`. Only
/// pairs with IoU strictly above `tau` may be matched. The best assignment
/// maximises the pair count, then the IoU sum. Returns
/// `(pair count, IoU sum, pairs)`.
pub fn brute_best_matching(iou: &[Vec<f64>], tau: f64) -> (usize, f64, Vec<(usize, usize)>) {
    let n_pred = iou.first().map_or(0, Vec::len);
    let mut used = vec![false; n_pred];
    let mut current = Vec::new();
    let mut best = (0usize, 0.0f64, Vec::new());
    fn rec(
        g: usize,
        iou: &[Vec<f64>],
        tau: f64,
        used: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        sum: f64,
        best: &mut (usize, f64, Vec<(usize, usize)>),
    ) {
        if g == iou.len() {
            let better = current.len() > best.0 || (current.len() == best.0 && sum > best.1 + 1e-12);
            if better {
                *best = (current.len(), sum, current.clone());
            }
            return;
        }
        // leave g unmatched
        rec(g + 1, iou, tau, used, current, sum, best);
        for p in 0..used.len() {
            if !used[p] && iou[g][p] > tau {
                used[p] = true;
                current.push((g, p));
                rec(g + 1, iou, tau, used, current, sum + iou[g][p], best);
                current.pop();
                used[p] = false;
            }
        }
    }
    rec(0, iou, tau, &mut used, &mut current, 0.0, &mut best);
    best
}

/// Full IoU matrix between every gt id and every pred id (ascending ids).
pub fn brute_iou_matrix(gt: &[u32], pred: &[u32]) -> (Vec<u32>, Vec<u32>, Vec<Vec<f64>>) {
    let g = ids_of(gt);
    let p = ids_of(pred);
    let m = g
        .iter()
        .map(|&gi| p.iter().map(|&pi| brute_iou(gt, gi, pred, pi)).collect())
        .collect();
    (g, p, m)
}

/// `TP / (TP + FN + FP)` straight from the counts.
pub fn ap_from_counts(tp: f64, fn_: f64, fp: f64) -> f64 {
    tp / (tp + fn_ + fp)
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative error with a tiny floor on the denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Pixels `(row, col)` visited when walking from `from` to `to` at spacing no
/// larger than half a pixel, rounding each sample to the nearest pixel.
pub fn segment_pixels(from: (usize, usize), to: (usize, usize)) -> Vec<(i64, i64)> {
    let dr = to.0 as f64 - from.0 as f64;
    let dc = to.1 as f64 - from.1 as f64;
    let len = (dr * dr + dc * dc).sqrt();
    let n = (2.0 * len).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let r = from.0 as f64 + t * dr;
            let c = from.1 as f64 + t * dc;
            (r.round() as i64, c.round() as i64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_pixel_has_unit_distance() {
        let mut ids = vec![0u32; 9];
        ids[4] = 1;
        let d = brute_boundary_distance(&ids, 3, 3);
        assert_eq!(d[4], 1.0);
    }

    #[test]
    fn pnpoly_unit_square() {
        let sq = [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)];
        assert!(pnpoly(&sq, (1.0, 1.0)));
        assert!(!pnpoly(&sq, (3.0, 1.0)));
    }

    #[test]
    fn brute_matching_prefers_more_pairs() {
        // greedy on the 0.9 entry would give one pair; two pairs exist
        let m = vec![vec![0.9, 0.6], vec![0.6, 0.0]];
        let (n, sum, _) = brute_best_matching(&m, 0.5);
        assert_eq!(n, 2);
        assert!((sum - 1.2).abs() < 1e-12);
    }
}

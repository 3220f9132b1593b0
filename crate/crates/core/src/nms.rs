//! Polygon proposals from `d`/`r` fields, greedy non-maximum suppression and
//! rendering of the survivors into an instance mask.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, LabelMask, Pixel, RadialField, ScalarField};
use crate::star::{Span, StarPolygon};

/// Thresholds for turning fields into instances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmsConfig {
    pub prob_thresh: f64,
    pub overlap_thresh: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            prob_thresh: 0.5,
            overlap_thresh: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub polygon: StarPolygon,
    pub score: f64,
}

/// Score descending, then centre row/col ascending, then radii.
fn proposal_order(a: &Proposal, b: &Proposal) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.polygon.centre().cmp(&b.polygon.centre()))
        .then_with(|| {
            a.polygon
                .radii()
                .iter()
                .zip(b.polygon.radii())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// One proposal for every pixel whose `d` is at least `prob_thresh`.
pub fn propose(d: &ScalarField, r: &RadialField, prob_thresh: f64) -> Result<Vec<Proposal>> {
    ensure_same_shape(d.shape(), r.shape())?;
    if !(0.0..=1.0).contains(&prob_thresh) {
        return Err(Error::InvalidParameter(format!(
            "prob_thresh must lie in [0, 1], got {prob_thresh}"
        )));
    }
    let mut out = Vec::new();
    for row in 0..d.height() {
        for col in 0..d.width() {
            let score = d.get(row, col);
            if score >= prob_thresh {
                let polygon = StarPolygon::new(Pixel::new(row, col), r.at(row, col).to_vec())?;
                out.push(Proposal { polygon, score });
            }
        }
    }
    out.sort_by(proposal_order);
    Ok(out)
}

/// Rasterized footprint cached for overlap tests.
struct Footprint {
    spans: Vec<Span>,
    area: usize,
    rows: (usize, usize),
    cols: (usize, usize),
}

impl Footprint {
    fn new(poly: &StarPolygon, height: usize, width: usize) -> Self {
        let spans = poly.spans(height, width);
        let area = spans.iter().map(Span::len).sum();
        let rows = spans
            .first()
            .map_or((1, 0), |f| (f.row, spans.last().unwrap().row));
        let cols = spans.iter().fold((usize::MAX, 0), |(lo, hi), s| {
            (lo.min(s.col_start), hi.max(s.col_end))
        });
        Self {
            spans,
            area,
            rows,
            cols,
        }
    }

    fn disjoint_bounds(&self, other: &Footprint) -> bool {
        self.area == 0
            || other.area == 0
            || self.rows.1 < other.rows.0
            || other.rows.1 < self.rows.0
            || self.cols.1 <= other.cols.0
            || other.cols.1 <= self.cols.0
    }

    fn intersection(&self, other: &Footprint) -> usize {
        if self.disjoint_bounds(other) {
            return 0;
        }
        let (a, b) = (&self.spans, &other.spans);
        let (mut i, mut j, mut total) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            let (sa, sb) = (a[i], b[j]);
            match sa.row.cmp(&sb.row) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    let lo = sa.col_start.max(sb.col_start);
                    let hi = sa.col_end.min(sb.col_end);
                    total += hi.saturating_sub(lo);
                    if sa.col_end <= sb.col_end {
                        i += 1;
                    } else {
                        j += 1;
                    }
                }
            }
        }
        total
    }

    fn iou(&self, other: &Footprint) -> f64 {
        let inter = self.intersection(other);
        let union = self.area + other.area - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// IoU of two polygons' rasterizations on a `height` x `width` grid.
pub fn polygon_iou(a: &StarPolygon, b: &StarPolygon, height: usize, width: usize) -> f64 {
    Footprint::new(a, height, width).iou(&Footprint::new(b, height, width))
}

/// Greedy suppression: keep the best remaining proposal, drop everything whose
/// rasterized IoU with a kept one exceeds `overlap_thresh`, repeat.
///
/// Input order does not matter; the output is in score order.
pub fn nms(
    proposals: &[Proposal],
    overlap_thresh: f64,
    height: usize,
    width: usize,
) -> Result<Vec<Proposal>> {
    if !(0.0..=1.0).contains(&overlap_thresh) {
        return Err(Error::InvalidParameter(format!(
            "overlap_thresh must lie in [0, 1], got {overlap_thresh}"
        )));
    }
    let mut order: Vec<&Proposal> = proposals.iter().collect();
    order.sort_by(|a, b| proposal_order(a, b));
    let mut kept: Vec<(&Proposal, Footprint)> = Vec::new();
    for cand in order {
        let fp = Footprint::new(&cand.polygon, height, width);
        if kept.iter().all(|(_, k)| k.iou(&fp) <= overlap_thresh) {
            kept.push((cand, fp));
        }
    }
    Ok(kept.into_iter().map(|(p, _)| p.clone()).collect())
}

/// Paint proposals into a label mask. Ids run 1..=n in descending score order
/// and higher-scored proposals win contested pixels.
pub fn render_instances(accepted: &[Proposal], height: usize, width: usize) -> LabelMask {
    let mut order: Vec<&Proposal> = accepted.iter().collect();
    order.sort_by(|a, b| proposal_order(a, b));
    let mut mask = LabelMask::zeros(height, width);
    for (rank, p) in order.iter().enumerate().rev() {
        let id = rank as u32 + 1;
        for s in p.polygon.spans(height, width) {
            for c in s.col_start..s.col_end {
                mask.set(s.row, c, id);
            }
        }
    }
    mask
}

/// `propose` -> `nms` -> `render_instances`.
pub fn segment(d: &ScalarField, r: &RadialField, cfg: &NmsConfig) -> Result<LabelMask> {
    let proposals = propose(d, r, cfg.prob_thresh)?;
    let kept = nms(&proposals, cfg.overlap_thresh, d.height(), d.width())?;
    Ok(render_instances(&kept, d.height(), d.width()))
}

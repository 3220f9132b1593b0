//! Seeded nested scenes of random star-convex blobs and degradation operators
//! that turn ground truth into predictions with known errors.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LabelMask, Pixel, SemanticMask};
use crate::metrics::{containment, ContainmentMap};
use crate::star::{is_star_convex, StarPolygon};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub n_outer: usize,
    /// Inclusive range of inner objects per outer object.
    pub inner_per_outer: [usize; 2],
    /// Inclusive range of base radii, in pixels.
    pub outer_radius: [f64; 2],
    pub inner_radius: [f64; 2],
    /// Log-normal spread of the per-ray radii around the base radius.
    pub boundary_jitter: f64,
    pub seed: u64,
    pub rays: usize,
    /// Minimum background gap between objects of the same category.
    pub gap: usize,
    pub max_retries: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            height: 128,
            width: 128,
            n_outer: 3,
            inner_per_outer: [1, 2],
            outer_radius: [14.0, 22.0],
            inner_radius: [4.0, 7.0],
            boundary_jitter: 0.15,
            seed: 0,
            rays: 32,
            gap: 2,
            max_retries: 1000,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} must satisfy 0 < min <= max, got {r:?}"
        )));
    }
    Ok(())
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_outer == 0 {
            return Err(Error::InvalidParameter("n_outer must be >= 1".into()));
        }
        if self.inner_per_outer[0] > self.inner_per_outer[1] {
            return Err(Error::InvalidParameter(format!(
                "inner_per_outer must satisfy min <= max, got {:?}",
                self.inner_per_outer
            )));
        }
        check_range("outer_radius", self.outer_radius)?;
        check_range("inner_radius", self.inner_radius)?;
        if self.inner_radius[1] >= self.outer_radius[0] {
            return Err(Error::InvalidParameter(
                "largest inner radius must be below the smallest outer radius".into(),
            ));
        }
        if !(self.boundary_jitter >= 0.0) || !self.boundary_jitter.is_finite() {
            return Err(Error::InvalidParameter("boundary_jitter must be >= 0".into()));
        }
        if self.rays < 3 {
            return Err(Error::DegenerateRayCount(self.rays));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidParameter("scene must have a non-empty grid".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NestedScene {
    pub gt_outer: LabelMask,
    pub gt_inner: LabelMask,
    pub containment: ContainmentMap,
    /// Generation centre of every instance; each instance is star-convex about it.
    pub outer_centres: BTreeMap<u32, Pixel>,
    pub inner_centres: BTreeMap<u32, Pixel>,
}

/// Radii drawn log-normally around `radius` and smoothed over neighbouring rays.
pub fn sample_radii<R: Rng>(rng: &mut R, radius: f64, jitter: f64, rays: usize) -> Result<Vec<f64>> {
    let dist = LogNormal::new(radius.ln(), jitter)
        .map_err(|e| Error::InvalidParameter(format!("radius distribution: {e}")))?;
    let raw: Vec<f64> = (0..rays).map(|_| dist.sample(rng)).collect();
    Ok((0..rays)
        .map(|k| {
            let prev = raw[(k + rays - 1) % rays];
            let next = raw[(k + 1) % rays];
            0.25 * prev + 0.5 * raw[k] + 0.25 * next
        })
        .collect())
}

fn footprint(poly: &StarPolygon, height: usize, width: usize) -> Vec<(usize, usize)> {
    poly.spans(height, width)
        .into_iter()
        .flat_map(|s| (s.col_start..s.col_end).map(move |c| (s.row, c)))
        .collect()
}

/// True if no pixel within Chebyshev distance `gap` of `(r, c)` is non-zero.
fn clear_around(mask: &LabelMask, r: usize, c: usize, gap: usize) -> bool {
    let g = gap as i64;
    for dr in -g..=g {
        for dc in -g..=g {
            if mask.get_or_background(r as i64 + dr, c as i64 + dc) != 0 {
                return false;
            }
        }
    }
    true
}

fn star_convex_footprint(pixels: &[(usize, usize)], centre: Pixel, height: usize, width: usize) -> bool {
    let mut m = SemanticMask::zeros(height, width);
    for &(r, c) in pixels {
        m.set(r, c, true);
    }
    is_star_convex(&m, centre).unwrap_or(false)
}

/// Place one blob. `centre_of` proposes a centre given the largest radius (or
/// `None` when no centre can work) and `allowed` vets every footprint pixel.
#[allow(clippy::too_many_arguments)]
fn place<R: Rng>(
    rng: &mut R,
    radius: [f64; 2],
    jitter: f64,
    rays: usize,
    shape: (usize, usize),
    retries: usize,
    mut centre_of: impl FnMut(&mut R, f64) -> Option<Pixel>,
    mut allowed: impl FnMut(usize, usize) -> bool,
) -> Option<(StarPolygon, Vec<(usize, usize)>)> {
    for _ in 0..retries {
        let base = rng.random_range(radius[0]..=radius[1]);
        let Ok(radii) = sample_radii(rng, base, jitter, rays) else {
            return None;
        };
        let reach = radii.iter().copied().fold(0.0, f64::max);
        let Some(centre) = centre_of(rng, reach) else { continue };
        let Ok(poly) = StarPolygon::new(centre, radii) else { continue };
        let pixels = footprint(&poly, shape.0, shape.1);
        if !pixels.contains(&(centre.row, centre.col)) {
            continue;
        }
        if !pixels.iter().all(|&(r, c)| allowed(r, c)) {
            continue;
        }
        if !star_convex_footprint(&pixels, centre, shape.0, shape.1) {
            continue;
        }
        return Some((poly, pixels));
    }
    None
}

/// Centre such that a disc of radius `reach` (plus one pixel) stays on the grid.
fn centre_in_grid<R: Rng>(rng: &mut R, reach: f64, height: usize, width: usize) -> Option<Pixel> {
    let m = reach.ceil() as usize + 1;
    if 2 * m >= height || 2 * m >= width {
        return None;
    }
    Some(Pixel::new(
        rng.random_range(m..height - m),
        rng.random_range(m..width - m),
    ))
}

/// Resamples of one outer object before its inners are declared unplaceable.
const OUTER_RESTARTS: usize = 25;

/// `count` inner blobs inside the 4-neighbour interior of outer object `oid`,
/// clear of `inner` and of each other, or `None` if any of them fails.
#[allow(clippy::too_many_arguments)]
fn place_inners<R: Rng>(
    rng: &mut R,
    spec: &SceneSpec,
    outer: &LabelMask,
    oid: u32,
    pixels: &[(usize, usize)],
    inner: &LabelMask,
    count: usize,
    budget: usize,
) -> Option<Vec<(StarPolygon, Vec<(usize, usize)>)>> {
    let mut interior: Vec<(usize, usize)> = pixels
        .iter()
        .copied()
        .filter(|&(r, c)| {
            let (r, c) = (r as i64, c as i64);
            [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
                .iter()
                .all(|&(a, b)| outer.get_or_background(a, b) == oid)
        })
        .collect();
    interior.sort_unstable();
    let mut scratch = inner.clone();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let (poly, ipix) = place(
            rng,
            spec.inner_radius,
            spec.boundary_jitter,
            spec.rays,
            scratch.shape(),
            budget,
            |rng, _| (!interior.is_empty()).then(|| interior[rng.random_range(0..interior.len())].into()),
            |r, c| interior.binary_search(&(r, c)).is_ok() && clear_around(&scratch, r, c, spec.gap),
        )?;
        for &(r, c) in &ipix {
            scratch.set(r, c, u32::MAX - k as u32);
        }
        out.push((poly, ipix));
    }
    Some(out)
}

/// Generate a nested scene. Same spec, same scene.
pub fn gen_scene(spec: &SceneSpec) -> Result<NestedScene> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut outer = LabelMask::zeros(h, w);
    let mut inner = LabelMask::zeros(h, w);
    let mut outer_centres = BTreeMap::new();
    let mut inner_centres = BTreeMap::new();
    let mut next_inner = 1u32;
    let inner_budget = (spec.max_retries / 10).max(1);
    for i in 0..spec.n_outer {
        let oid = i as u32 + 1;
        let count = rng.random_range(spec.inner_per_outer[0]..=spec.inner_per_outer[1]);
        let mut done = false;
        for _ in 0..OUTER_RESTARTS {
            let placed = place(
                &mut rng,
                spec.outer_radius,
                spec.boundary_jitter,
                spec.rays,
                (h, w),
                spec.max_retries,
                |rng, reach| centre_in_grid(rng, reach, h, w),
                |r, c| clear_around(&outer, r, c, spec.gap),
            );
            let Some((poly, pixels)) = placed else {
                return Err(Error::Placement {
                    constraint: format!(
                        "outer object {oid} does not fit on the {h}x{w} grid without touching another"
                    ),
                    retries: spec.max_retries,
                });
            };
            for &(r, c) in &pixels {
                outer.set(r, c, oid);
            }
            if let Some(inners) = place_inners(&mut rng, spec, &outer, oid, &pixels, &inner, count, inner_budget) {
                for (poly, ipix) in inners {
                    for (r, c) in ipix {
                        inner.set(r, c, next_inner);
                    }
                    inner_centres.insert(next_inner, poly.centre());
                    next_inner += 1;
                }
                outer_centres.insert(oid, poly.centre());
                done = true;
                break;
            }
            // inners did not fit: resample this outer object
            for &(r, c) in &pixels {
                outer.set(r, c, 0);
            }
        }
        if !done {
            return Err(Error::Placement {
                constraint: format!("{count} inner objects do not fit strictly inside outer object {oid}"),
                retries: spec.max_retries,
            });
        }
    }
    let containment = containment(&inner, &outer)?;
    Ok(NestedScene {
        gt_outer: outer,
        gt_inner: inner,
        containment,
        outer_centres,
        inner_centres,
    })
}

/// One step of `degrade`.
#[derive(Clone, Debug, PartialEq)]
pub enum DegradeOp {
    /// Remove each instance independently with probability `p`.
    Drop { p: f64 },
    /// Translate every instance, clipping at the borders.
    Shift { dr: i64, dc: i64 },
    /// `n` steps of 4-neighbour erosion per instance.
    Erode { n: usize },
    /// `n` steps of 4-neighbour dilation into background; contested pixels
    /// go to the smallest neighbouring id.
    Dilate { n: usize },
    /// Add `k` new star-convex instances that avoid `forbidden` and every
    /// existing instance.
    SpawnOutside {
        k: usize,
        forbidden: SemanticMask,
        radius: [f64; 2],
    },
}

const SPAWN_JITTER: f64 = 0.1;
const SPAWN_RAYS: usize = 32;
const SPAWN_RETRIES: usize = 1000;

fn erode_once(mask: &LabelMask) -> LabelMask {
    let mut out = mask.clone();
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            let id = mask.get(r, c);
            if id == 0 {
                continue;
            }
            let (ri, ci) = (r as i64, c as i64);
            let edge = [(ri - 1, ci), (ri + 1, ci), (ri, ci - 1), (ri, ci + 1)]
                .iter()
                .any(|&(a, b)| mask.get_or_background(a, b) != id);
            if edge {
                out.set(r, c, 0);
            }
        }
    }
    out
}

fn dilate_once(mask: &LabelMask) -> LabelMask {
    let mut out = mask.clone();
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.get(r, c) != 0 {
                continue;
            }
            let (ri, ci) = (r as i64, c as i64);
            let best = [(ri - 1, ci), (ri + 1, ci), (ri, ci - 1), (ri, ci + 1)]
                .iter()
                .map(|&(a, b)| mask.get_or_background(a, b))
                .filter(|&id| id != 0)
                .min();
            if let Some(id) = best {
                out.set(r, c, id);
            }
        }
    }
    out
}

/// Apply `ops` in order. Randomised steps draw from one generator seeded with `seed`.
pub fn degrade(mask: &LabelMask, ops: &[DegradeOp], seed: u64) -> Result<LabelMask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = mask.shape();
    let mut m = mask.clone();
    for op in ops {
        m = match op {
            DegradeOp::Drop { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidParameter(format!("drop probability {p} not in [0, 1]")));
                }
                let dropped: Vec<u32> = m
                    .ids()
                    .into_iter()
                    .filter(|_| rng.random::<f64>() < *p)
                    .collect();
                m.map_ids(|id| if dropped.binary_search(&id).is_ok() { 0 } else { id })
            }
            DegradeOp::Shift { dr, dc } => {
                let mut out = LabelMask::zeros(h, w);
                for r in 0..h {
                    for c in 0..w {
                        let id = m.get(r, c);
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if id != 0 && (0..h as i64).contains(&nr) && (0..w as i64).contains(&nc) {
                            out.set(nr as usize, nc as usize, id);
                        }
                    }
                }
                out
            }
            DegradeOp::Erode { n } => (0..*n).fold(m, |acc, _| erode_once(&acc)),
            DegradeOp::Dilate { n } => (0..*n).fold(m, |acc, _| dilate_once(&acc)),
            DegradeOp::SpawnOutside {
                k,
                forbidden,
                radius,
            } => {
                crate::grid::ensure_same_shape((h, w), forbidden.shape())?;
                check_range("spawn radius", *radius)?;
                let mut out = m;
                for _ in 0..*k {
                    let placed = place(
                        &mut rng,
                        *radius,
                        SPAWN_JITTER,
                        SPAWN_RAYS,
                        (h, w),
                        SPAWN_RETRIES,
                        |rng, reach| centre_in_grid(rng, reach, h, w),
                        |r, c| !forbidden.get(r, c) && out.get(r, c) == 0,
                    );
                    let Some((_, pixels)) = placed else {
                        return Err(Error::Placement {
                            constraint: "spawned object does not fit outside the forbidden mask"
                                .into(),
                            retries: SPAWN_RETRIES,
                        });
                    };
                    let id = out.max_id() + 1;
                    for (r, c) in pixels {
                        out.set(r, c, id);
                    }
                }
                out
            }
        };
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::to_semantic;
    use crate::loss::wbr_penalty;

    #[test]
    fn same_spec_same_scene() {
        let spec = SceneSpec::default();
        assert_eq!(gen_scene(&spec).unwrap(), gen_scene(&spec).unwrap());
        let other = SceneSpec { seed: 1, ..spec };
        assert_ne!(gen_scene(&other).unwrap().gt_outer, gen_scene(&SceneSpec::default()).unwrap().gt_outer);
    }

    #[test]
    fn counts_follow_spec() {
        let spec = SceneSpec {
            n_outer: 3,
            inner_per_outer: [2, 2],
            seed: 11,
            ..Default::default()
        };
        let s = gen_scene(&spec).unwrap();
        assert_eq!(s.gt_outer.ids(), vec![1, 2, 3]);
        assert_eq!(s.gt_inner.instance_count(), 6);
        let groups = s.containment.inners_by_outer();
        assert!(groups.values().all(|v| v.len() == 2));
        assert_eq!(groups.len(), 3);
    }

    #[test]
    fn scene_is_its_own_perfect_prediction() {
        let s = gen_scene(&SceneSpec::default()).unwrap();
        let o = to_semantic(&s.gt_outer);
        let v = wbr_penalty(&to_semantic(&s.gt_inner), &o, &o, 1e-7).unwrap();
        assert_eq!(v, 1.0 / (1.0 + 1e-7));
    }

    #[test]
    fn impossible_spec_fails_loudly() {
        let spec = SceneSpec {
            height: 40,
            width: 40,
            n_outer: 5,
            outer_radius: [15.0, 16.0],
            max_retries: 50,
            ..Default::default()
        };
        assert!(matches!(gen_scene(&spec), Err(Error::Placement { retries: 50, .. })));
    }

    #[test]
    fn spec_validation() {
        let bad = SceneSpec {
            inner_radius: [4.0, 20.0],
            ..Default::default()
        };
        assert!(gen_scene(&bad).is_err());
        let none = SceneSpec {
            n_outer: 0,
            ..Default::default()
        };
        assert!(gen_scene(&none).is_err());
    }

    #[test]
    fn drop_extremes() {
        let s = gen_scene(&SceneSpec::default()).unwrap();
        let all = degrade(&s.gt_inner, &[DegradeOp::Drop { p: 1.0 }], 3).unwrap();
        assert_eq!(all, LabelMask::zeros(128, 128));
        let none = degrade(&s.gt_inner, &[DegradeOp::Drop { p: 0.0 }], 3).unwrap();
        assert_eq!(none, s.gt_inner);
        assert_eq!(degrade(&s.gt_inner, &[], 3).unwrap(), s.gt_inner);
    }

    #[test]
    fn erode_and_dilate_change_areas() {
        let s = gen_scene(&SceneSpec::default()).unwrap();
        let before = s.gt_outer.areas();
        let eroded = degrade(&s.gt_outer, &[DegradeOp::Erode { n: 1 }], 0).unwrap();
        let dilated = degrade(&s.gt_outer, &[DegradeOp::Dilate { n: 1 }], 0).unwrap();
        for (id, a) in before {
            assert!(eroded.areas()[&id] < a);
            assert!(dilated.areas()[&id] > a);
        }
    }

    #[test]
    fn shift_moves_and_clips() {
        let mut m = LabelMask::zeros(4, 4);
        m.set(0, 0, 1);
        m.set(3, 3, 2);
        let s = degrade(&m, &[DegradeOp::Shift { dr: 1, dc: 1 }], 0).unwrap();
        assert_eq!(s.get(1, 1), 1);
        assert_eq!(s.ids(), vec![1]);
    }

    #[test]
    fn spawned_inners_raise_penalty() {
        let s = gen_scene(&SceneSpec::default()).unwrap();
        let o = to_semantic(&s.gt_outer);
        let op = DegradeOp::SpawnOutside {
            k: 3,
            forbidden: o.clone(),
            radius: [3.0, 5.0],
        };
        let pred = degrade(&s.gt_inner, &[op], 9).unwrap();
        assert_eq!(pred.instance_count(), s.gt_inner.instance_count() + 3);
        let v = wbr_penalty(&to_semantic(&pred), &o, &o, 1e-7).unwrap();
        assert!(v > 1.0 / (1.0 + 1e-7));
    }
}

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, LabelMask};
use crate::metrics::matching::{check_tau, MatchTable, Overlaps};

/// Inner ground-truth id -> enclosing outer ground-truth id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainmentMap(pub BTreeMap<u32, Option<u32>>);

impl ContainmentMap {
    pub fn get(&self, inner: u32) -> Option<u32> {
        self.0.get(&inner).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, Option<u32>)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    /// Inner ids assigned to each outer id.
    pub fn inners_by_outer(&self) -> BTreeMap<u32, Vec<u32>> {
        let mut out: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (inner, outer) in self.iter() {
            if let Some(o) = outer {
                out.entry(o).or_default().push(inner);
            }
        }
        out
    }
}

/// Assign every inner instance to the outer instance covering most of its
/// pixels; ties go to the smaller outer id, uncovered inners map to `None`.
pub fn containment(gt_inner: &LabelMask, gt_outer: &LabelMask) -> Result<ContainmentMap> {
    ensure_same_shape(gt_inner.shape(), gt_outer.shape())?;
    let mut counts: BTreeMap<u32, HashMap<u32, usize>> = BTreeMap::new();
    for (&i, &o) in gt_inner.data().iter().zip(gt_outer.data()) {
        if i == 0 {
            continue;
        }
        let e = counts.entry(i).or_default();
        if o != 0 {
            *e.entry(o).or_default() += 1;
        }
    }
    Ok(ContainmentMap(
        counts
            .into_iter()
            .map(|(inner, cover)| {
                let best = cover
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(o, _)| o);
                (inner, best)
            })
            .collect(),
    ))
}

/// How matched outer objects count in the one-to-many outer rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterPolicy {
    /// At least one contained inner matched, or no inner contained.
    #[default]
    Any,
    /// Every contained inner matched.
    All,
}

impl std::fmt::Display for OuterPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OuterPolicy::Any => "any",
            OuterPolicy::All => "all",
        })
    }
}

impl std::str::FromStr for OuterPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any" => Ok(OuterPolicy::Any),
            "all" => Ok(OuterPolicy::All),
            other => Err(Error::InvalidParameter(format!("unknown outer policy '{other}'"))),
        }
    }
}

/// Joint true-positive rates with their integer numerators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jtpr {
    pub inner: f64,
    pub outer: f64,
    pub inner_joint: usize,
    pub outer_joint: usize,
    pub n_inner: usize,
    pub n_outer: usize,
}

fn check_non_empty(n_inner: usize, n_outer: usize) -> Result<()> {
    if n_inner == 0 {
        return Err(Error::EmptyGroundTruth("JTPR needs at least one inner ground-truth object"));
    }
    if n_outer == 0 {
        return Err(Error::EmptyGroundTruth("JTPR needs at least one outer ground-truth object"));
    }
    Ok(())
}

/// One-to-one JTPR from precomputed matchings.
pub fn jtpr_one_to_one_from(
    map: &ContainmentMap,
    inner: &MatchTable,
    outer: &MatchTable,
) -> Result<Jtpr> {
    check_non_empty(inner.n_gt, outer.n_gt)?;
    let matched_outer: BTreeSet<u32> = outer.matched_gt().collect();
    let joint = inner
        .matched_gt()
        .filter(|&i| map.get(i).is_some_and(|o| matched_outer.contains(&o)))
        .count();
    Ok(Jtpr {
        inner: joint as f64 / inner.n_gt as f64,
        outer: joint as f64 / outer.n_gt as f64,
        inner_joint: joint,
        outer_joint: joint,
        n_inner: inner.n_gt,
        n_outer: outer.n_gt,
    })
}

/// One-to-many JTPR from precomputed matchings.
pub fn jtpr_one_to_many_from(
    map: &ContainmentMap,
    inner: &MatchTable,
    outer: &MatchTable,
    policy: OuterPolicy,
) -> Result<Jtpr> {
    check_non_empty(inner.n_gt, outer.n_gt)?;
    let matched_inner: BTreeSet<u32> = inner.matched_gt().collect();
    let groups = map.inners_by_outer();
    let mut inner_joint = 0;
    let mut outer_joint = 0;
    for o in outer.matched_gt() {
        let contained = groups.get(&o).map_or(&[][..], Vec::as_slice);
        let hits = contained.iter().filter(|i| matched_inner.contains(i)).count();
        inner_joint += hits;
        let ok = match policy {
            OuterPolicy::Any => contained.is_empty() || hits > 0,
            OuterPolicy::All => hits == contained.len(),
        };
        outer_joint += ok as usize;
    }
    Ok(Jtpr {
        inner: inner_joint as f64 / inner.n_gt as f64,
        outer: outer_joint as f64 / outer.n_gt as f64,
        inner_joint,
        outer_joint,
        n_inner: inner.n_gt,
        n_outer: outer.n_gt,
    })
}

fn tables(
    gt_inner: &LabelMask,
    pred_inner: &LabelMask,
    gt_outer: &LabelMask,
    pred_outer: &LabelMask,
    tau: f64,
) -> Result<(ContainmentMap, MatchTable, MatchTable)> {
    check_tau(tau)?;
    let map = containment(gt_inner, gt_outer)?;
    let inner = Overlaps::new(gt_inner, pred_inner)?.match_at(tau)?;
    let outer = Overlaps::new(gt_outer, pred_outer)?.match_at(tau)?;
    Ok((map, inner, outer))
}

/// Fraction of (inner, containing outer) ground-truth pairs with both members
/// matched, over the inner and over the outer ground-truth counts.
pub fn jtpr_one_to_one(
    gt_inner: &LabelMask,
    pred_inner: &LabelMask,
    gt_outer: &LabelMask,
    pred_outer: &LabelMask,
    tau: f64,
) -> Result<Jtpr> {
    let (map, inner, outer) = tables(gt_inner, pred_inner, gt_outer, pred_outer, tau)?;
    jtpr_one_to_one_from(&map, &inner, &outer)
}

/// Inner rate: matched inners inside matched outers over all inners. Outer
/// rate: matched outers satisfying `policy` over all outers.
pub fn jtpr_one_to_many(
    gt_inner: &LabelMask,
    pred_inner: &LabelMask,
    gt_outer: &LabelMask,
    pred_outer: &LabelMask,
    tau: f64,
    policy: OuterPolicy,
) -> Result<Jtpr> {
    let (map, inner, outer) = tables(gt_inner, pred_inner, gt_outer, pred_outer, tau)?;
    jtpr_one_to_many_from(&map, &inner, &outer, policy)
}

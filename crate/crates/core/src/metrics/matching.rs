use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, LabelMask};

/// A matched ground-truth/prediction pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt: u32,
    pub pred: u32,
    pub iou: f64,
}

/// One-to-one matching at a single threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchTable {
    pub tau: f64,
    /// Sorted by ground-truth id.
    pub pairs: Vec<MatchedPair>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n_gt: usize,
    pub n_pred: usize,
}

impl MatchTable {
    pub fn iou_sum(&self) -> f64 {
        // fold from +0.0: an empty f64 `sum()` is -0.0
        self.pairs.iter().fold(0.0, |acc, p| acc + p.iou)
    }

    pub fn iou_recall(&self) -> Result<f64> {
        if self.n_gt == 0 {
            return Err(Error::EmptyGroundTruth("IoU_R is undefined without ground-truth objects"));
        }
        Ok(self.iou_sum() / self.n_gt as f64)
    }

    pub fn average_precision(&self) -> Result<f64> {
        ap_from_counts(self.tp, self.fn_, self.fp)
    }

    pub fn matched_gt(&self) -> impl Iterator<Item = u32> + '_ {
        self.pairs.iter().map(|p| p.gt)
    }
}

/// `tp / (tp + fn + fp)`.
pub fn ap_from_counts(tp: usize, fn_: usize, fp: usize) -> Result<f64> {
    let denom = tp + fn_ + fp;
    if denom == 0 {
        return Err(Error::EmptyGroundTruth("AP is undefined when both object sets are empty"));
    }
    Ok(tp as f64 / denom as f64)
}

/// Pixel overlaps between every pair of instances of two masks.
///
/// Only pairs sharing at least one pixel are stored; all others have IoU 0 and
/// can never be matched.
#[derive(Clone, Debug)]
pub struct Overlaps {
    gt_ids: Vec<u32>,
    pred_ids: Vec<u32>,
    /// `(gt index, pred index, iou)`, sorted.
    candidates: Vec<(usize, usize, f64)>,
}

impl Overlaps {
    pub fn new(gt: &LabelMask, pred: &LabelMask) -> Result<Self> {
        ensure_same_shape(gt.shape(), pred.shape())?;
        let mut gt_area: BTreeMap<u32, usize> = BTreeMap::new();
        let mut pred_area: BTreeMap<u32, usize> = BTreeMap::new();
        let mut inter: HashMap<(u32, u32), usize> = HashMap::new();
        for (&g, &p) in gt.data().iter().zip(pred.data()) {
            if g != 0 {
                *gt_area.entry(g).or_default() += 1;
            }
            if p != 0 {
                *pred_area.entry(p).or_default() += 1;
            }
            if g != 0 && p != 0 {
                *inter.entry((g, p)).or_default() += 1;
            }
        }
        let gt_ids: Vec<u32> = gt_area.keys().copied().collect();
        let pred_ids: Vec<u32> = pred_area.keys().copied().collect();
        let gi: HashMap<u32, usize> = gt_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let pi: HashMap<u32, usize> = pred_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut candidates: Vec<(usize, usize, f64)> = inter
            .into_iter()
            .map(|((g, p), n)| {
                let union = gt_area[&g] + pred_area[&p] - n;
                (gi[&g], pi[&p], n as f64 / union as f64)
            })
            .collect();
        candidates.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        Ok(Self {
            gt_ids,
            pred_ids,
            candidates,
        })
    }

    pub fn gt_ids(&self) -> &[u32] {
        &self.gt_ids
    }

    pub fn pred_ids(&self) -> &[u32] {
        &self.pred_ids
    }

    /// Optimal one-to-one matching with IoU strictly above `tau`: the number of
    /// pairs is maximised first, then the IoU sum.
    pub fn match_at(&self, tau: f64) -> Result<MatchTable> {
        check_tau(tau)?;
        let edges: Vec<(usize, usize, f64)> = self
            .candidates
            .iter()
            .copied()
            .filter(|&(_, _, iou)| iou > tau)
            .collect();
        let n_gt = self.gt_ids.len();
        let mut uf = UnionFind::new(n_gt + self.pred_ids.len());
        for &(g, p, _) in &edges {
            uf.union(g, n_gt + p);
        }
        let mut components: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();
        for &e in &edges {
            components.entry(uf.find(e.0)).or_default().push(e);
        }
        let mut pairs = Vec::new();
        for comp in components.values() {
            for (g, p) in assign_component(comp) {
                let iou = comp
                    .iter()
                    .find(|e| e.0 == g && e.1 == p)
                    .map(|e| e.2)
                    .expect("assigned pair is an edge");
                pairs.push(MatchedPair {
                    gt: self.gt_ids[g],
                    pred: self.pred_ids[p],
                    iou,
                });
            }
        }
        pairs.sort_by_key(|p| p.gt);
        let tp = pairs.len();
        Ok(MatchTable {
            tau,
            pairs,
            tp,
            fp: self.pred_ids.len() - tp,
            fn_: n_gt - tp,
            n_gt,
            n_pred: self.pred_ids.len(),
        })
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("tau must lie in (0, 1), got {tau}")));
    }
    Ok(())
}

/// Best assignment within one connected component of the candidate graph.
fn assign_component(edges: &[(usize, usize, f64)]) -> Vec<(usize, usize)> {
    if let [(g, p, _)] = edges {
        return vec![(*g, *p)];
    }
    let mut rows: Vec<usize> = edges.iter().map(|e| e.0).collect();
    let mut cols: Vec<usize> = edges.iter().map(|e| e.1).collect();
    rows.sort_unstable();
    rows.dedup();
    cols.sort_unstable();
    cols.dedup();
    let n = rows.len().max(cols.len());
    // every real pair outweighs any IoU sum, so the pair count wins first
    let bonus = rows.len().min(cols.len()) as f64 + 1.0;
    let mut weight = vec![vec![0.0; n]; n];
    let mut is_edge = vec![vec![false; n]; n];
    for &(g, p, iou) in edges {
        let r = rows.binary_search(&g).unwrap();
        let c = cols.binary_search(&p).unwrap();
        weight[r][c] = bonus + iou;
        is_edge[r][c] = true;
    }
    let cost: Vec<Vec<f64>> = weight
        .iter()
        .map(|row| row.iter().map(|w| -w).collect())
        .collect();
    hungarian(&cost)
        .into_iter()
        .enumerate()
        .filter(|&(r, c)| r < rows.len() && c < cols.len() && is_edge[r][c])
        .map(|(r, c)| (rows[r], cols[c]))
        .collect()
}

/// Minimum-cost perfect assignment on a square matrix; returns the column of
/// each row. Shortest augmenting paths with potentials, O(n^3).
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    // 1-based with column 0 as the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// IoU of instance `gt_id` in `gt` and `pred_id` in `pred`.
pub fn instance_iou(gt: &LabelMask, gt_id: u32, pred: &LabelMask, pred_id: u32) -> Result<f64> {
    ensure_same_shape(gt.shape(), pred.shape())?;
    let (mut a, mut b, mut inter) = (0usize, 0usize, 0usize);
    for (&g, &p) in gt.data().iter().zip(pred.data()) {
        let in_a = g == gt_id && gt_id != 0;
        let in_b = p == pred_id && pred_id != 0;
        a += in_a as usize;
        b += in_b as usize;
        inter += (in_a && in_b) as usize;
    }
    if a == 0 {
        return Err(Error::MissingInstance(gt_id));
    }
    if b == 0 {
        return Err(Error::MissingInstance(pred_id));
    }
    Ok(inter as f64 / (a + b - inter) as f64)
}

/// Optimal one-to-one matching of `pred` against `gt` at threshold `tau`.
pub fn match_instances(gt: &LabelMask, pred: &LabelMask, tau: f64) -> Result<MatchTable> {
    Overlaps::new(gt, pred)?.match_at(tau)
}

/// Sum of matched IoUs over the number of ground-truth objects.
pub fn iou_recall(gt: &LabelMask, pred: &LabelMask, tau: f64) -> Result<f64> {
    match_instances(gt, pred, tau)?.iou_recall()
}

/// `TP / (TP + FN + FP)` at threshold `tau`.
pub fn average_precision(gt: &LabelMask, pred: &LabelMask, tau: f64) -> Result<f64> {
    match_instances(gt, pred, tau)?.average_precision()
}

/// Change in FP that exactly offsets a change `delta_tp` in TP (with FN moving
/// by `-delta_tp`), leaving AP unchanged: `delta_tp * (tp + fn + fp) / tp`.
///
/// A drop in TP needs a drop in FP to keep AP; when that would take FP below
/// zero no such configuration exists and an error is returned.
pub fn ap_indifference_delta(tp: usize, fn_: usize, fp: usize, delta_tp: i64) -> Result<f64> {
    if tp == 0 {
        return Err(Error::InvalidParameter("tp must be > 0".into()));
    }
    let after = tp as i64 + delta_tp;
    if after < 0 || after > (tp + fn_) as i64 {
        return Err(Error::InvalidParameter(format!(
            "tp + delta_tp = {after} must lie in [0, {}]",
            tp + fn_
        )));
    }
    let k = (tp + fn_) as f64;
    let delta_fp = delta_tp as f64 * (k + fp as f64) / tp as f64;
    if fp as f64 + delta_fp < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "no non-negative FP count keeps AP when tp changes by {delta_tp}"
        )));
    }
    Ok(delta_fp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip(spans: &[(usize, usize, u32)], width: usize) -> LabelMask {
        let mut m = LabelMask::zeros(1, width);
        for &(a, b, id) in spans {
            for c in a..b {
                m.set(0, c, id);
            }
        }
        m
    }

    #[test]
    fn no_pairs_gives_positive_zero() {
        let mut gt = LabelMask::zeros(4, 4);
        gt.set(0, 0, 1);
        let t = match_instances(&gt, &LabelMask::zeros(4, 4), 0.5).unwrap();
        assert!(t.iou_recall().unwrap().is_sign_positive());
    }

    #[test]
    fn iou_examples() {
        let a = strip(&[(0, 4, 1)], 10);
        let b = strip(&[(2, 6, 5)], 10);
        assert!((instance_iou(&a, 1, &b, 5).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(instance_iou(&a, 1, &a, 1).unwrap(), 1.0);
        let c = strip(&[(6, 9, 2)], 10);
        assert_eq!(instance_iou(&a, 1, &c, 2).unwrap(), 0.0);
        assert!(matches!(instance_iou(&a, 3, &b, 5), Err(Error::MissingInstance(3))));
    }

    #[test]
    fn relabelled_prediction_matches_fully() {
        let gt = strip(&[(0, 3, 1), (4, 8, 2), (9, 12, 3)], 12);
        let pred = gt.map_ids(|id| if id == 0 { 0 } else { 10 - id });
        let t = match_instances(&gt, &pred, 0.5).unwrap();
        assert_eq!((t.tp, t.fp, t.fn_), (3, 0, 0));
        assert_eq!(t.iou_recall().unwrap(), 1.0);
        assert_eq!(t.average_precision().unwrap(), 1.0);
    }

    #[test]
    fn empty_prediction() {
        let gt = strip(&[(0, 3, 1), (4, 8, 2)], 10);
        let t = match_instances(&gt, &LabelMask::zeros(1, 10), 0.5).unwrap();
        assert_eq!((t.tp, t.fp, t.fn_), (0, 0, 2));
        assert_eq!(t.iou_recall().unwrap(), 0.0);
    }

    #[test]
    fn optimal_beats_greedy() {
        // A-X 0.43, A-Y 0.40, B-X 0.25: greedy by IoU takes A-X and strands B
        let gt = strip(&[(0, 10, 1), (10, 20, 2)], 20);
        let pred = strip(&[(0, 4, 8), (4, 14, 9)], 20);
        let t = match_instances(&gt, &pred, 0.2).unwrap();
        assert_eq!(t.tp, 2);
        assert_eq!(
            t.pairs.iter().map(|p| (p.gt, p.pred)).collect::<Vec<_>>(),
            vec![(1, 8), (2, 9)]
        );
    }

    #[test]
    fn threshold_is_strict() {
        let gt = strip(&[(0, 4, 1)], 8);
        let pred = strip(&[(0, 2, 1)], 8);
        assert_eq!(match_instances(&gt, &pred, 0.5).unwrap().tp, 0);
        assert_eq!(match_instances(&gt, &pred, 0.49).unwrap().tp, 1);
    }

    #[test]
    fn iou_recall_hand_case() {
        // one object at IoU 0.8, one missed
        let gt = strip(&[(0, 5, 1), (10, 15, 2)], 20);
        let pred = strip(&[(0, 4, 1)], 20);
        assert!((iou_recall(&gt, &pred, 0.5).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(iou_recall(&gt, &pred, 0.85).unwrap(), 0.0);
        assert!(iou_recall(&LabelMask::zeros(1, 20), &pred, 0.5).is_err());
    }

    #[test]
    fn ap_counts() {
        assert_eq!(ap_from_counts(1, 0, 1).unwrap(), 0.5);
        assert!((ap_from_counts(2, 2, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(ap_from_counts(0, 0, 0).is_err());
    }

    #[test]
    fn indifference_examples() {
        assert_eq!(ap_indifference_delta(2, 2, 2, 0).unwrap(), 0.0);
        assert_eq!(ap_indifference_delta(2, 2, 2, 1).unwrap(), 3.0);
        assert_eq!(ap_indifference_delta(2, 2, 2, 2).unwrap(), 6.0);
        assert!(ap_indifference_delta(0, 2, 2, 1).is_err());
        assert!(ap_indifference_delta(2, 2, 2, 3).is_err());
        assert!(ap_indifference_delta(2, 2, 2, -3).is_err());
        assert!(ap_indifference_delta(2, 2, 2, -2).is_err());
        // (4, 0, 4): losing one TP is offset by losing two FPs
        assert_eq!(ap_indifference_delta(4, 0, 4, -1).unwrap(), -2.0);
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&cost);
        let total: f64 = a.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn rejects_bad_tau() {
        let m = strip(&[(0, 2, 1)], 4);
        assert!(match_instances(&m, &m, 0.0).is_err());
        assert!(match_instances(&m, &m, 1.0).is_err());
    }
}

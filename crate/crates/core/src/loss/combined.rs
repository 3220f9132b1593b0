use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, to_semantic, ScalarField, SemanticMask};
use crate::loss::penalty::{wbr_exclusive, wbr_overlap, wbr_penalty};
use crate::loss::stardist::{stardist_loss_sum, BranchFields};
use crate::loss::{LossConfig, NeumaierSum, Reduction};
use crate::nms::{segment, NmsConfig};

/// Which nesting penalty is added to the branch losses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    /// Plain branched objective, no penalty.
    None,
    /// One inner category inside one outer category.
    #[default]
    Wbr,
    /// Two mutually exclusive inner categories.
    Exclusive,
    /// Two inner categories overlapping by `alpha`.
    Overlap,
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PenaltyKind::None => "none",
            PenaltyKind::Wbr => "wbr",
            PenaltyKind::Exclusive => "exclusive",
            PenaltyKind::Overlap => "overlap",
        })
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PenaltyKind::None),
            "wbr" => Ok(PenaltyKind::Wbr),
            "exclusive" => Ok(PenaltyKind::Exclusive),
            "overlap" => Ok(PenaltyKind::Overlap),
            other => Err(Error::InvalidParameter(format!("unknown penalty '{other}'"))),
        }
    }
}

/// Logistic squash used to get differentiable semantic masks from `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftMaskParams {
    pub threshold: f64,
    pub steepness: f64,
}

impl Default for SoftMaskParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            steepness: 10.0,
        }
    }
}

/// How predicted semantic masks are obtained from a branch's predicted fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskRoute {
    /// `soft_semantic(d_pred)`; differentiable.
    Soft(SoftMaskParams),
    /// propose -> NMS -> render -> semantic; evaluation only.
    Hard(NmsConfig),
}

impl Default for MaskRoute {
    fn default() -> Self {
        MaskRoute::Soft(SoftMaskParams::default())
    }
}

/// The decoder branches of one image. `inner_b` is the second inner category
/// used by the exclusive and overlap penalties.
#[derive(Clone, Debug, PartialEq)]
pub struct NestedBranches {
    pub inner: BranchFields,
    pub outer: BranchFields,
    pub inner_b: Option<BranchFields>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Reduced loss of each branch.
    pub inner: f64,
    pub outer: f64,
    pub inner_b: Option<f64>,
    /// Penalty value before the `lambda3` weight; `None` when no penalty is selected.
    pub penalty: Option<f64>,
    pub total: f64,
    pub reduction: Reduction,
}

/// `1 / (1 + exp(-(d - threshold) * steepness))` per pixel.
pub fn soft_semantic(d: &ScalarField, threshold: f64, steepness: f64) -> Result<ScalarField> {
    if !(steepness > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "steepness must be > 0, got {steepness}"
        )));
    }
    Ok(d.map(|v| logistic((v - threshold) * steepness)))
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn reduce(sum: NeumaierSum, pixels: usize, reduction: Reduction) -> NeumaierSum {
    match reduction {
        Reduction::Sum => sum,
        Reduction::Mean => sum.scaled(1.0 / pixels as f64),
    }
}

fn predicted_mask(branch: &BranchFields, route: &MaskRoute) -> Result<ScalarField> {
    match route {
        MaskRoute::Soft(p) => soft_semantic(&branch.d_pred, p.threshold, p.steepness),
        MaskRoute::Hard(nms) => {
            let labels = segment(&branch.d_pred, &branch.r_pred, nms)?;
            let sem = to_semantic(&labels);
            let (h, w) = sem.shape();
            ScalarField::new(h, w, sem.data().iter().map(|&v| f64::from(v)).collect())
        }
    }
}

fn gt_semantic(d_gt: &ScalarField) -> SemanticMask {
    SemanticMask::from_fn(d_gt.height(), d_gt.width(), |r, c| d_gt.get(r, c) > 0.0)
}

/// Branch losses plus `lambda3` times the selected penalty.
///
/// Inner categories take `inner` (and `inner_b`), the outer category `outer`.
/// `gt_outer` supplies the penalty denominators.
pub fn combined_loss(
    branches: &NestedBranches,
    gt_outer: &SemanticMask,
    cfg: &LossConfig,
    kind: PenaltyKind,
    route: &MaskRoute,
) -> Result<LossBreakdown> {
    cfg.validate(kind)?;
    let shape = branches.inner.shape();
    branches.inner.validate()?;
    branches.outer.validate()?;
    ensure_same_shape(shape, branches.outer.shape())?;
    ensure_same_shape(shape, gt_outer.shape())?;
    if let Some(b) = &branches.inner_b {
        b.validate()?;
        ensure_same_shape(shape, b.shape())?;
    }
    let pixels = shape.0 * shape.1;

    let inner = reduce(stardist_loss_sum(&branches.inner, cfg), pixels, cfg.reduction);
    let outer = reduce(stardist_loss_sum(&branches.outer, cfg), pixels, cfg.reduction);
    let inner_b = branches
        .inner_b
        .as_ref()
        .map(|b| reduce(stardist_loss_sum(b, cfg), pixels, cfg.reduction));

    let penalty = match kind {
        PenaltyKind::None => None,
        PenaltyKind::Wbr => {
            let p_in = predicted_mask(&branches.inner, route)?;
            let p_out = predicted_mask(&branches.outer, route)?;
            Some(wbr_penalty(&p_in, &p_out, gt_outer, cfg.epsilon)?)
        }
        PenaltyKind::Exclusive | PenaltyKind::Overlap => {
            let second = branches.inner_b.as_ref().ok_or_else(|| {
                Error::InvalidParameter(format!("the {kind} penalty needs a second inner branch"))
            })?;
            let p1 = predicted_mask(&branches.inner, route)?;
            let p3 = predicted_mask(second, route)?;
            let p_out = predicted_mask(&branches.outer, route)?;
            let gt1 = gt_semantic(&branches.inner.d_gt);
            Some(if kind == PenaltyKind::Exclusive {
                wbr_exclusive(&p1, &p3, &p_out, &gt1, gt_outer, cfg.epsilon)?
            } else {
                wbr_overlap(&p1, &p3, &p_out, &gt1, gt_outer, cfg.alpha, cfg.epsilon)?
            })
        }
    };

    // one rounding for the whole objective keeps finite differences of it usable
    let mut total = NeumaierSum::default();
    for part in [Some(&inner), Some(&outer), inner_b.as_ref()].into_iter().flatten() {
        total.merge(part);
    }
    if let Some(p) = penalty {
        total.add(cfg.lambda3 * p);
    }
    Ok(LossBreakdown {
        inner: inner.total(),
        outer: outer.total(),
        inner_b: inner_b.map(|b| b.total()),
        penalty,
        total: total.total(),
        reduction: cfg.reduction,
    })
}

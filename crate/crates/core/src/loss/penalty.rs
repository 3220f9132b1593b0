//! Within-boundary penalties on inner-object predictions.
//!
//! All three variants share the interior ratio
//!
//! ```text
//! rho = sum(!pred_outer * pred_inner) / sum(!gt_outer)
//! ```
//!
//! The numerator comes from predictions while the denominator comes from the
//! ground truth, so the raw ratio can exceed 1 and push `1 + eps - rho` to or
//! below zero. Every ratio is therefore clamped to `[0, 1]` before use, which
//! keeps the penalty inside `(1/(c + eps), 1/eps]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, MaskWeights};
use crate::loss::NeumaierSum;

/// Individual ratio terms of a penalty evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTerms {
    /// Inner (first) prediction mass outside the predicted outer object.
    pub interior_1: f64,
    /// Second inner prediction mass outside the predicted outer object.
    pub interior_3: f64,
    /// Co-located mass of the two inner predictions over the first ground truth.
    pub pair_ratio: f64,
    /// Final penalty value.
    pub value: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be a positive finite number, got {eps}"
        )));
    }
    Ok(())
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// `sum(1 - gt)`: the ground-truth outside area.
pub(crate) fn outside_area<M: MaskWeights + ?Sized>(gt_outer: &M) -> Result<f64> {
    let (h, w) = gt_outer.shape();
    let mut acc = NeumaierSum::default();
    for i in 0..h * w {
        acc.add(1.0 - gt_outer.weight(i));
    }
    let total = acc.total();
    if total <= 0.0 {
        return Err(Error::UndefinedDenominator(
            "ground-truth outer mask covers the whole image",
        ));
    }
    Ok(total)
}

pub(crate) fn inside_area<M: MaskWeights + ?Sized>(gt_inner: &M) -> Result<f64> {
    let (h, w) = gt_inner.shape();
    let mut acc = NeumaierSum::default();
    for i in 0..h * w {
        acc.add(gt_inner.weight(i));
    }
    let total = acc.total();
    if total <= 0.0 {
        return Err(Error::UndefinedDenominator(
            "ground-truth inner mask is empty",
        ));
    }
    Ok(total)
}

/// Unclamped `sum(!outer * inner) / denominator`.
pub(crate) fn raw_interior_ratio<A, B>(inner: &A, outer: &B, denominator: f64) -> f64
where
    A: MaskWeights + ?Sized,
    B: MaskWeights + ?Sized,
{
    let (h, w) = inner.shape();
    let mut acc = NeumaierSum::default();
    for i in 0..h * w {
        acc.add((1.0 - outer.weight(i)) * inner.weight(i));
    }
    acc.total() / denominator
}

/// Unclamped `sum(a * b) / denominator`.
pub(crate) fn raw_pair_ratio<A, B>(a: &A, b: &B, denominator: f64) -> f64
where
    A: MaskWeights + ?Sized,
    B: MaskWeights + ?Sized,
{
    let (h, w) = a.shape();
    let mut acc = NeumaierSum::default();
    for i in 0..h * w {
        acc.add(a.weight(i) * b.weight(i));
    }
    acc.total() / denominator
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Largest value the squared overlap deviation can take.
pub fn overlap_ceiling(alpha: f64) -> f64 {
    let m = alpha.max(1.0 - alpha);
    m * m
}

/// Within-boundary penalty `1 / (1 + eps - rho)` for one inner/outer pair.
///
/// Works on hard masks and on soft `[0, 1]` surrogates alike.
pub fn wbr_penalty<A, B, C>(pred_inner: &A, pred_outer: &B, gt_outer: &C, eps: f64) -> Result<f64>
where
    A: MaskWeights + ?Sized,
    B: MaskWeights + ?Sized,
    C: MaskWeights + ?Sized,
{
    check_eps(eps)?;
    ensure_same_shape(gt_outer.shape(), pred_inner.shape())?;
    ensure_same_shape(gt_outer.shape(), pred_outer.shape())?;
    let denom = outside_area(gt_outer)?;
    let rho = clamp_unit(raw_interior_ratio(pred_inner, pred_outer, denom));
    Ok(1.0 / ((1.0 - rho) + eps))
}

fn two_inner_terms<A, B, C, D, E>(
    pred1: &A,
    pred3: &B,
    pred_outer: &C,
    gt1: &D,
    gt_outer: &E,
    eps: f64,
) -> Result<PenaltyTerms>
where
    A: MaskWeights + ?Sized,
    B: MaskWeights + ?Sized,
    C: MaskWeights + ?Sized,
    D: MaskWeights + ?Sized,
    E: MaskWeights + ?Sized,
{
    check_eps(eps)?;
    let s = gt_outer.shape();
    for other in [pred1.shape(), pred3.shape(), pred_outer.shape(), gt1.shape()] {
        ensure_same_shape(s, other)?;
    }
    let outside = outside_area(gt_outer)?;
    let inner = inside_area(gt1)?;
    Ok(PenaltyTerms {
        interior_1: clamp_unit(raw_interior_ratio(pred1, pred_outer, outside)),
        interior_3: clamp_unit(raw_interior_ratio(pred3, pred_outer, outside)),
        pair_ratio: clamp_unit(raw_pair_ratio(pred1, pred3, inner)),
        value: 0.0,
    })
}

/// Penalty for two mutually exclusive inner objects inside one outer object:
/// `1 / (3 + eps - L1 - L3 - L13)` with `L13` the co-located fraction.
pub fn wbr_exclusive_terms<A, B, C, D, E>(
    pred1: &A,
    pred3: &B,
    pred_outer: &C,
    gt1: &D,
    gt_outer: &E,
    eps: f64,
) -> Result<PenaltyTerms>
where
    A: MaskWeights + ?Sized,
    B: MaskWeights + ?Sized,
    C: MaskWeights + ?Sized,
    D: MaskWeights + ?Sized,
    E: MaskWeights + ?Sized,
{
    let mut t = two_inner_terms(pred1, pred3, pred_outer, gt1, gt_outer, eps)?;
    t.value = 1.0 / ((3.0 - t.interior_1 - t.interior_3 - t.pair_ratio) + eps);
    Ok(t)
}

pub fn wbr_exclusive<A, B, C, D, E>(
    pred1: &A,
    pred3: &B,
    pred_outer: &C,
    gt1: &D,
    gt_outer: &E,
    eps: f64,
) -> Result<f64>
where
    A: MaskWeights + ?Sized,
    B: MaskWeights + ?Sized,
    C: MaskWeights + ?Sized,
    D: MaskWeights + ?Sized,
    E: MaskWeights + ?Sized,
{
    Ok(wbr_exclusive_terms(pred1, pred3, pred_outer, gt1, gt_outer, eps)?.value)
}

/// Penalty for two inner objects expected to overlap by a fraction `alpha`:
/// `1 / (2 + max(alpha, 1-alpha)^2 + eps - L1 - L3 - (alpha - q)^2)` where `q`
/// is the measured overlap ratio. `pair_ratio` in the result holds `q`.
pub fn wbr_overlap_terms<A, B, C, D, E>(
    pred1: &A,
    pred3: &B,
    pred_outer: &C,
    gt1: &D,
    gt_outer: &E,
    alpha: f64,
    eps: f64,
) -> Result<PenaltyTerms>
where
    A: MaskWeights + ?Sized,
    B: MaskWeights + ?Sized,
    C: MaskWeights + ?Sized,
    D: MaskWeights + ?Sized,
    E: MaskWeights + ?Sized,
{
    check_alpha(alpha)?;
    let mut t = two_inner_terms(pred1, pred3, pred_outer, gt1, gt_outer, eps)?;
    let dev = alpha - t.pair_ratio;
    t.value = 1.0 / ((2.0 + overlap_ceiling(alpha) - t.interior_1 - t.interior_3 - dev * dev) + eps);
    Ok(t)
}

pub fn wbr_overlap<A, B, C, D, E>(
    pred1: &A,
    pred3: &B,
    pred_outer: &C,
    gt1: &D,
    gt_outer: &E,
    alpha: f64,
    eps: f64,
) -> Result<f64>
where
    A: MaskWeights + ?Sized,
    B: MaskWeights + ?Sized,
    C: MaskWeights + ?Sized,
    D: MaskWeights + ?Sized,
    E: MaskWeights + ?Sized,
{
    Ok(wbr_overlap_terms(pred1, pred3, pred_outer, gt1, gt_outer, alpha, eps)?.value)
}

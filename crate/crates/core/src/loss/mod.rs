//! Branched star-convex loss, within-boundary penalties and a toy optimizer.

mod combined;
mod fit;
mod penalty;
mod stardist;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use combined::{
    combined_loss, soft_semantic, LossBreakdown, MaskRoute, NestedBranches, PenaltyKind,
    SoftMaskParams,
};
pub use fit::{
    outside_inner_mass, toy_fit, BranchParams, BranchTargets, FitConfig, FitProblem, FitResult,
    FitState,
};
pub use penalty::{
    overlap_ceiling, wbr_exclusive, wbr_exclusive_terms, wbr_overlap, wbr_overlap_terms,
    wbr_penalty, PenaltyTerms,
};
pub use stardist::{bce_term, distance_term, stardist_loss, BranchFields, BCE_CLIP};

/// How per-pixel branch losses are reduced in the combined objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Sum over pixels.
    #[default]
    Sum,
    /// Mean over pixels.
    Mean,
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        })
    }
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            other => Err(Error::InvalidParameter(format!("unknown reduction '{other}'"))),
        }
    }
}

/// Loss weights. Defaults: `K = 32` rays elsewhere, `lambda1 = 0.2`,
/// `lambda2 = 1e-4`, `lambda3 = 1`, `epsilon = 1e-7`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub epsilon: f64,
    /// Expected overlap fraction for the overlap penalty.
    pub alpha: f64,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.2,
            lambda2: 1e-4,
            lambda3: 1.0,
            epsilon: 1e-7,
            alpha: 0.5,
            reduction: Reduction::Sum,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, kind: PenaltyKind) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if kind == PenaltyKind::Overlap {
            penalty::check_alpha(self.alpha)?;
        }
        Ok(())
    }
}

/// Compensated summation; keeps long pixel sums accurate to about one ulp.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    /// Fold another accumulator in without first rounding it to one value.
    pub(crate) fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub(crate) fn scaled(&self, factor: f64) -> NeumaierSum {
        let mut out = NeumaierSum::default();
        out.add(self.sum * factor);
        out.add(self.compensation * factor);
        out
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = LossConfig::default();
        assert_eq!(c.lambda1, 0.2);
        assert_eq!(c.lambda2, 1e-4);
        assert_eq!(c.lambda3, 1.0);
        assert_eq!(c.epsilon, 1e-7);
        assert_eq!(c.reduction, Reduction::Sum);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad_eps = LossConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad_eps.validate(PenaltyKind::Wbr).is_err());
        let bad_alpha = LossConfig {
            alpha: 1.5,
            ..Default::default()
        };
        assert!(bad_alpha.validate(PenaltyKind::Wbr).is_ok());
        assert!(bad_alpha.validate(PenaltyKind::Overlap).is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = NeumaierSum::default();
        s.add(1e16);
        s.add(1.0);
        s.add(-1e16);
        assert_eq!(s.total(), 1.0);
    }
}

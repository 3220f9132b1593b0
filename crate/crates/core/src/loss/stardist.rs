use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, RadialField, ScalarField};
use crate::loss::{LossConfig, NeumaierSum};

/// Predicted probabilities are clipped to `[BCE_CLIP, 1 - BCE_CLIP]` before the log.
pub const BCE_CLIP: f64 = 1e-7;

/// Ground-truth and predicted `d`/`r` fields of one decoder branch.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchFields {
    pub d_gt: ScalarField,
    pub d_pred: ScalarField,
    pub r_gt: RadialField,
    pub r_pred: RadialField,
}

impl BranchFields {
    pub fn new(
        d_gt: ScalarField,
        d_pred: ScalarField,
        r_gt: RadialField,
        r_pred: RadialField,
    ) -> Result<Self> {
        let f = Self {
            d_gt,
            d_pred,
            r_gt,
            r_pred,
        };
        f.validate()?;
        Ok(f)
    }

    /// A branch whose prediction equals its ground truth.
    pub fn perfect(d: ScalarField, r: RadialField) -> Result<Self> {
        Self::new(d.clone(), d, r.clone(), r)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.d_gt.shape()
    }

    pub fn rays(&self) -> usize {
        self.r_gt.rays()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let s = self.d_gt.shape();
        ensure_same_shape(s, self.d_pred.shape())?;
        ensure_same_shape(s, self.r_gt.shape())?;
        ensure_same_shape(s, self.r_pred.shape())?;
        if self.r_gt.rays() != self.r_pred.rays() {
            return Err(Error::RayCountMismatch {
                expected: self.r_gt.rays(),
                found: self.r_pred.rays(),
            });
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn bce_pixel(d: f64, d_hat: f64) -> f64 {
    let q = d_hat.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
    -(d * q.ln() + (1.0 - d) * (1.0 - q).ln())
}

#[inline]
pub(crate) fn distance_pixel(d: f64, r: &[f64], r_hat: &[f64], lambda2: f64) -> f64 {
    let k = r.len() as f64;
    if d > 0.0 {
        let mae: f64 = r.iter().zip(r_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / k;
        d * mae
    } else {
        let reg: f64 = r_hat.iter().map(|v| v.abs()).sum::<f64>() / k;
        lambda2 * reg
    }
}

/// Mean binary cross-entropy between `d_gt` and `d_pred`.
pub fn bce_term(d_gt: &ScalarField, d_pred: &ScalarField) -> Result<f64> {
    ensure_same_shape(d_gt.shape(), d_pred.shape())?;
    let mut acc = NeumaierSum::default();
    for (&d, &q) in d_gt.data().iter().zip(d_pred.data()) {
        acc.add(bce_pixel(d, q));
    }
    Ok(acc.total() / d_gt.data().len() as f64)
}

/// Mean over pixels of the `d`-weighted ray MAE on foreground plus the
/// `lambda2`-weighted ray magnitude on background.
pub fn distance_term(fields: &BranchFields, cfg: &LossConfig) -> Result<f64> {
    fields.validate()?;
    Ok(distance_sum(fields, cfg) / fields.d_gt.data().len() as f64)
}

fn distance_sum(fields: &BranchFields, cfg: &LossConfig) -> f64 {
    let (h, w) = fields.shape();
    let mut acc = NeumaierSum::default();
    for row in 0..h {
        for col in 0..w {
            acc.add(distance_pixel(
                fields.d_gt.get(row, col),
                fields.r_gt.at(row, col),
                fields.r_pred.at(row, col),
                cfg.lambda2,
            ));
        }
    }
    acc.total()
}

/// Sum over pixels of `bce + lambda1 * distance`, left unrounded.
pub(crate) fn stardist_loss_sum(fields: &BranchFields, cfg: &LossConfig) -> NeumaierSum {
    let (h, w) = fields.shape();
    let mut acc = NeumaierSum::default();
    for row in 0..h {
        for col in 0..w {
            let d = fields.d_gt.get(row, col);
            acc.add(bce_pixel(d, fields.d_pred.get(row, col)));
            acc.add(
                cfg.lambda1
                    * distance_pixel(
                        d,
                        fields.r_gt.at(row, col),
                        fields.r_pred.at(row, col),
                        cfg.lambda2,
                    ),
            );
        }
    }
    acc
}

/// Per-pixel averaged single-branch loss `bce + lambda1 * distance`.
pub fn stardist_loss(fields: &BranchFields, cfg: &LossConfig) -> Result<f64> {
    fields.validate()?;
    Ok(stardist_loss_sum(fields, cfg).total() / fields.d_gt.data().len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn cfg() -> LossConfig {
        LossConfig::default()
    }

    #[test]
    fn bce_perfect_binary_is_clip_level() {
        let d = ScalarField::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let v = bce_term(&d, &d).unwrap();
        assert!(v >= 0.0 && v < 2e-7, "{v}");
    }

    #[test]
    fn bce_half_prediction_is_ln2() {
        let ones = ScalarField::filled(3, 3, 1.0);
        let half = ScalarField::filled(3, 3, 0.5);
        assert!((bce_term(&ones, &half).unwrap() - LN2).abs() < 1e-15);
        // soft targets at 0.5 have the same entropy floor
        assert!((bce_term(&half, &half).unwrap() - LN2).abs() < 1e-15);
    }

    #[test]
    fn bce_rejects_mismatch() {
        let a = ScalarField::zeros(2, 2);
        let b = ScalarField::zeros(2, 3);
        assert!(bce_term(&a, &b).is_err());
    }

    fn one_pixel_case(n_side: usize, fg: bool, offset: f64) -> BranchFields {
        let k = 8;
        let mut d = ScalarField::zeros(n_side, n_side);
        let mut r_gt = RadialField::zeros(n_side, n_side, k).unwrap();
        let mut r_pred = r_gt.clone();
        if fg {
            d.set(0, 0, 1.0);
            r_gt.at_mut(0, 0).fill(3.0);
            r_pred.at_mut(0, 0).fill(3.0 + offset);
        } else {
            r_pred.at_mut(0, 0).fill(offset);
        }
        BranchFields::new(d.clone(), d, r_gt, r_pred).unwrap()
    }

    #[test]
    fn distance_zero_for_exact_rays() {
        let f = one_pixel_case(4, true, 0.0);
        assert_eq!(distance_term(&f, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn distance_single_foreground_pixel() {
        let f = one_pixel_case(4, true, 1.0);
        let n = 16.0;
        assert!((distance_term(&f, &cfg()).unwrap() - 1.0 / n).abs() < 1e-15);
    }

    #[test]
    fn distance_single_background_pixel() {
        let c = 2.5;
        let f = one_pixel_case(4, false, c);
        let n = 16.0;
        let expected = 1e-4 * c / n;
        assert!((distance_term(&f, &cfg()).unwrap() - expected).abs() < 1e-18);
    }

    #[test]
    fn stardist_composes_terms() {
        let f = one_pixel_case(4, true, 1.0);
        let bce = bce_term(&f.d_gt, &f.d_pred).unwrap();
        let total = stardist_loss(&f, &cfg()).unwrap();
        assert!((total - (bce + 0.2 / 16.0)).abs() < 1e-15);

        let decoupled = LossConfig {
            lambda1: 0.0,
            ..cfg()
        };
        assert_eq!(stardist_loss(&f, &decoupled).unwrap(), bce);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let d = ScalarField::new(2, 2, vec![0.0, 1.0, 0.5, 0.0]).unwrap();
        let r = RadialField::new(2, 2, 3, vec![0.0, 0.0, 0.0, 2.0, 3.0, 4.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
            .unwrap();
        let f = BranchFields::perfect(d, r).unwrap();
        // the soft 0.5 pixel carries its entropy ln 2 over 4 pixels
        let v = stardist_loss(&f, &cfg()).unwrap();
        assert!((v - LN2 / 4.0).abs() < 1e-6);
    }

    #[test]
    fn branch_fields_reject_ray_mismatch() {
        let d = ScalarField::zeros(2, 2);
        let r3 = RadialField::zeros(2, 2, 3).unwrap();
        let r4 = RadialField::zeros(2, 2, 4).unwrap();
        assert!(matches!(
            BranchFields::new(d.clone(), d, r3, r4),
            Err(Error::RayCountMismatch { .. })
        ));
    }
}

//! Gradient descent directly on per-pixel predicted fields.
//!
//! Each branch is parametrised by logits `z` (with `d_pred = sigmoid(z)`) and
//! non-negative radii. The objective is `combined_loss` on the soft mask route.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, to_semantic, LabelMask, RadialField, ScalarField, SemanticMask};
use crate::loss::combined::{combined_loss, logistic, MaskRoute, NestedBranches, PenaltyKind, SoftMaskParams};
use crate::loss::penalty::{clamp_unit, outside_area, overlap_ceiling};
use crate::loss::stardist::{BranchFields, BCE_CLIP};
use crate::loss::{LossConfig, NeumaierSum, Reduction};
use crate::star::{boundary_distance_field, radial_field};

/// Logits are projected into `[-LOGIT_LIMIT, LOGIT_LIMIT]` after every step.
pub const LOGIT_LIMIT: f64 = 15.0;

/// Ground-truth fields of one branch.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchTargets {
    pub d: ScalarField,
    pub r: RadialField,
}

/// Free parameters of one branch.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchParams {
    pub logits: ScalarField,
    pub radii: RadialField,
}

impl BranchParams {
    pub fn probabilities(&self) -> ScalarField {
        self.logits.map(logistic)
    }

    fn zeros_like(&self) -> Self {
        Self {
            logits: ScalarField::zeros(self.logits.height(), self.logits.width()),
            radii: RadialField::zeros(self.radii.height(), self.radii.width(), self.radii.rays())
                .expect("ray count already validated"),
        }
    }

    fn len(&self) -> usize {
        self.logits.data().len() + self.radii.data().len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitState {
    pub inner: BranchParams,
    pub outer: BranchParams,
    pub inner_b: Option<BranchParams>,
}

impl FitState {
    fn branches(&self) -> impl Iterator<Item = &BranchParams> {
        [&self.inner, &self.outer].into_iter().chain(self.inner_b.as_ref())
    }

    fn branches_mut(&mut self) -> impl Iterator<Item = &mut BranchParams> {
        [&mut self.inner, &mut self.outer]
            .into_iter()
            .chain(self.inner_b.as_mut())
    }

    /// Logits then radii of inner, outer and (if present) the second inner branch.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.branches().map(BranchParams::len).sum());
        for b in self.branches() {
            v.extend_from_slice(b.logits.data());
            v.extend_from_slice(b.radii.data());
        }
        v
    }

    /// Inverse of `flatten`, using `self` for the layout.
    pub fn from_flat(&self, values: &[f64]) -> Result<FitState> {
        let expected: usize = self.branches().map(BranchParams::len).sum();
        if values.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "expected {expected} parameters, got {}",
                values.len()
            )));
        }
        let mut out = self.clone();
        let mut at = 0;
        for b in out.branches_mut() {
            let n = b.logits.data().len();
            b.logits.data_mut().copy_from_slice(&values[at..at + n]);
            at += n;
            let m = b.radii.data().len();
            b.radii.data_mut().copy_from_slice(&values[at..at + m]);
            at += m;
        }
        Ok(out)
    }
}

/// Targets, weights and penalty choice for a toy fit.
#[derive(Clone, Debug)]
pub struct FitProblem {
    pub inner: BranchTargets,
    pub outer: BranchTargets,
    pub inner_b: Option<BranchTargets>,
    pub gt_outer: SemanticMask,
    pub loss: LossConfig,
    pub kind: PenaltyKind,
    pub soft: SoftMaskParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    pub step_size: f64,
    pub seed: u64,
    /// Amplitude of the uniform noise added to `d` at initialisation.
    pub noise: f64,
    /// Amplitude of the uniform noise added to the radii at initialisation.
    pub radial_noise: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            step_size: 0.5,
            seed: 0,
            noise: 0.3,
            radial_noise: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub initial: FitState,
    pub fitted: FitState,
    /// Loss before the first step and after every step.
    pub loss_trace: Vec<f64>,
    pub outside_mass_initial: f64,
    pub outside_mass_final: f64,
}

/// Soft inner mass on pixels outside the ground-truth outer mask.
pub fn outside_inner_mass(
    d_pred: &ScalarField,
    gt_outer: &SemanticMask,
    soft: &SoftMaskParams,
) -> Result<f64> {
    ensure_same_shape(d_pred.shape(), gt_outer.shape())?;
    let s = super::soft_semantic(d_pred, soft.threshold, soft.steepness)?;
    let mut acc = NeumaierSum::default();
    for (&v, &g) in s.data().iter().zip(gt_outer.data()) {
        if g == 0 {
            acc.add(v);
        }
    }
    Ok(acc.total())
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Soft mask values and their derivatives with respect to the logits.
fn soft_with_slope(params: &BranchParams, soft: &SoftMaskParams) -> (Vec<f64>, Vec<f64>) {
    params
        .logits
        .data()
        .iter()
        .map(|&z| {
            let q = logistic(z);
            let s = logistic((q - soft.threshold) * soft.steepness);
            (s, s * (1.0 - s) * soft.steepness * q * (1.0 - q))
        })
        .unzip()
}

fn clamp_slope(raw: f64) -> f64 {
    if (0.0..=1.0).contains(&raw) {
        1.0
    } else {
        0.0
    }
}

impl BranchTargets {
    /// Exact fields of a ground-truth label mask.
    pub fn from_mask(mask: &LabelMask, rays: usize) -> Result<Self> {
        Ok(Self {
            d: boundary_distance_field(mask),
            r: radial_field(mask, rays)?,
        })
    }
}

impl FitProblem {
    /// Single inner category nested in one outer category, soft masks at their defaults.
    pub fn nested(
        gt_inner: &LabelMask,
        gt_outer: &LabelMask,
        rays: usize,
        loss: LossConfig,
        kind: PenaltyKind,
    ) -> Result<Self> {
        ensure_same_shape(gt_outer.shape(), gt_inner.shape())?;
        Ok(Self {
            inner: BranchTargets::from_mask(gt_inner, rays)?,
            outer: BranchTargets::from_mask(gt_outer, rays)?,
            inner_b: None,
            gt_outer: to_semantic(gt_outer),
            loss,
            kind,
            soft: SoftMaskParams::default(),
        })
    }

    fn targets(&self) -> impl Iterator<Item = &BranchTargets> {
        [&self.inner, &self.outer].into_iter().chain(self.inner_b.as_ref())
    }

    fn validate(&self) -> Result<()> {
        let shape = self.gt_outer.shape();
        let rays = self.inner.r.rays();
        for t in self.targets() {
            ensure_same_shape(shape, t.d.shape())?;
            ensure_same_shape(shape, t.r.shape())?;
            if t.r.rays() != rays {
                return Err(Error::RayCountMismatch {
                    expected: rays,
                    found: t.r.rays(),
                });
            }
        }
        if !(self.soft.steepness > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "steepness must be > 0, got {}",
                self.soft.steepness
            )));
        }
        if matches!(self.kind, PenaltyKind::Exclusive | PenaltyKind::Overlap) && self.inner_b.is_none() {
            return Err(Error::InvalidParameter(format!(
                "the {} penalty needs a second inner branch",
                self.kind
            )));
        }
        self.loss.validate(self.kind)
    }

    fn check_state(&self, state: &FitState) -> Result<()> {
        if state.inner_b.is_some() != self.inner_b.is_some() {
            return Err(Error::InvalidParameter(
                "state and problem disagree on the second inner branch".into(),
            ));
        }
        for (t, p) in self.targets().zip(state.branches()) {
            ensure_same_shape(t.d.shape(), p.logits.shape())?;
            ensure_same_shape(t.d.shape(), p.radii.shape())?;
            if t.r.rays() != p.radii.rays() {
                return Err(Error::RayCountMismatch {
                    expected: t.r.rays(),
                    found: p.radii.rays(),
                });
            }
        }
        Ok(())
    }

    /// Predicted fields for `state` paired with the targets.
    pub fn branches(&self, state: &FitState) -> Result<NestedBranches> {
        self.check_state(state)?;
        let make = |t: &BranchTargets, p: &BranchParams| {
            BranchFields::new(t.d.clone(), p.probabilities(), t.r.clone(), p.radii.clone())
        };
        Ok(NestedBranches {
            inner: make(&self.inner, &state.inner)?,
            outer: make(&self.outer, &state.outer)?,
            inner_b: match (&self.inner_b, &state.inner_b) {
                (Some(t), Some(p)) => Some(make(t, p)?),
                _ => None,
            },
        })
    }

    pub fn loss(&self, state: &FitState) -> Result<f64> {
        let b = self.branches(state)?;
        Ok(combined_loss(&b, &self.gt_outer, &self.loss, self.kind, &MaskRoute::Soft(self.soft))?.total)
    }

    /// Analytic gradient of `loss` with respect to every logit and radius.
    pub fn gradient(&self, state: &FitState) -> Result<FitState> {
        self.validate()?;
        self.check_state(state)?;
        let cfg = &self.loss;
        let (h, w) = self.gt_outer.shape();
        let n = h * w;
        let scale = match cfg.reduction {
            Reduction::Sum => 1.0,
            Reduction::Mean => 1.0 / n as f64,
        };
        let mut grad = FitState {
            inner: state.inner.zeros_like(),
            outer: state.outer.zeros_like(),
            inner_b: state.inner_b.as_ref().map(BranchParams::zeros_like),
        };

        for ((t, p), g) in self.targets().zip(state.branches()).zip(grad.branches_mut()) {
            let k = t.r.rays() as f64;
            for i in 0..n {
                let d = t.d.data()[i];
                let q = logistic(p.logits.data()[i]);
                if q > BCE_CLIP && q < 1.0 - BCE_CLIP {
                    g.logits.data_mut()[i] = scale * (q - d);
                }
                let (row, col) = (i / w, i % w);
                let r_gt = t.r.at(row, col);
                let r_hat = p.radii.at(row, col);
                let gr = g.radii.at_mut(row, col);
                for j in 0..gr.len() {
                    gr[j] = if d > 0.0 {
                        scale * cfg.lambda1 * d / k * sign(r_hat[j] - r_gt[j])
                    } else {
                        scale * cfg.lambda1 * cfg.lambda2 / k * sign(r_hat[j])
                    };
                }
            }
        }

        if self.kind == PenaltyKind::None {
            return Ok(grad);
        }
        let outside = outside_area(&self.gt_outer)?;
        let (s1, ds1) = soft_with_slope(&state.inner, &self.soft);
        let (so, dso) = soft_with_slope(&state.outer, &self.soft);
        let interior = |s: &[f64]| {
            let mut acc = NeumaierSum::default();
            for i in 0..n {
                acc.add((1.0 - so[i]) * s[i]);
            }
            acc.total() / outside
        };

        if self.kind == PenaltyKind::Wbr {
            let raw = interior(&s1);
            let lam = 1.0 / ((1.0 - clamp_unit(raw)) + cfg.epsilon);
            let c1 = cfg.lambda3 * lam * lam * clamp_slope(raw) / outside;
            for i in 0..n {
                grad.inner.logits.data_mut()[i] += c1 * (1.0 - so[i]) * ds1[i];
                grad.outer.logits.data_mut()[i] -= c1 * s1[i] * dso[i];
            }
            return Ok(grad);
        }

        let second = state.inner_b.as_ref().expect("validated above");
        let (s3, ds3) = soft_with_slope(second, &self.soft);
        let mut inside = NeumaierSum::default();
        for &v in self.inner.d.data() {
            inside.add(if v > 0.0 { 1.0 } else { 0.0 });
        }
        let inside = inside.total();
        if inside <= 0.0 {
            return Err(Error::UndefinedDenominator("ground-truth inner mask is empty"));
        }
        let raw1 = interior(&s1);
        let raw3 = interior(&s3);
        let mut pair = NeumaierSum::default();
        for i in 0..n {
            pair.add(s1[i] * s3[i]);
        }
        let raw_q = pair.total() / inside;
        let (l1, l3, q) = (clamp_unit(raw1), clamp_unit(raw3), clamp_unit(raw_q));

        // dLambda/dterm for the two interior ratios and the pair ratio
        let (lam, c_pair) = if self.kind == PenaltyKind::Exclusive {
            let lam = 1.0 / ((3.0 - l1 - l3 - q) + cfg.epsilon);
            (lam, lam * lam)
        } else {
            let dev = cfg.alpha - q;
            let lam = 1.0 / ((2.0 + overlap_ceiling(cfg.alpha) - l1 - l3 - dev * dev) + cfg.epsilon);
            (lam, -2.0 * dev * lam * lam)
        };
        let c1 = cfg.lambda3 * lam * lam * clamp_slope(raw1) / outside;
        let c3 = cfg.lambda3 * lam * lam * clamp_slope(raw3) / outside;
        let cq = cfg.lambda3 * c_pair * clamp_slope(raw_q) / inside;
        let g3 = grad.inner_b.as_mut().expect("validated above");
        for i in 0..n {
            grad.inner.logits.data_mut()[i] += (c1 * (1.0 - so[i]) + cq * s3[i]) * ds1[i];
            g3.logits.data_mut()[i] += (c3 * (1.0 - so[i]) + cq * s1[i]) * ds3[i];
            grad.outer.logits.data_mut()[i] -= (c1 * s1[i] + c3 * s3[i]) * dso[i];
        }
        Ok(grad)
    }

    /// Ground truth plus seeded uniform noise.
    pub fn initial_state(&self, cfg: &FitConfig) -> Result<FitState> {
        if !(cfg.noise >= 0.0) || !(cfg.radial_noise >= 0.0) {
            return Err(Error::InvalidParameter("noise amplitudes must be >= 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut init = |t: &BranchTargets| {
            let mut logits = t.d.clone();
            for v in logits.data_mut() {
                let p = (*v + cfg.noise * rng.random_range(-1.0..=1.0)).clamp(1e-3, 1.0 - 1e-3);
                *v = logit(p);
            }
            let mut radii = t.r.clone();
            for v in radii.data_mut() {
                *v = (*v + cfg.radial_noise * rng.random_range(-1.0..=1.0)).max(0.0);
            }
            BranchParams { logits, radii }
        };
        Ok(FitState {
            inner: init(&self.inner),
            outer: init(&self.outer),
            inner_b: self.inner_b.as_ref().map(init),
        })
    }
}

/// Plain projected gradient descent from `problem.initial_state(cfg)`.
pub fn toy_fit(problem: &FitProblem, cfg: &FitConfig) -> Result<FitResult> {
    problem.validate()?;
    if !(cfg.step_size > 0.0) || !cfg.step_size.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "step_size must be > 0, got {}",
            cfg.step_size
        )));
    }
    let initial = problem.initial_state(cfg)?;
    let mut state = initial.clone();
    let first = problem.loss(&state)?;
    if !first.is_finite() {
        return Err(Error::NonFinite {
            iteration: 0,
            value: first,
        });
    }
    let mut trace = vec![first];
    for it in 1..=cfg.iterations {
        let grad = problem.gradient(&state)?;
        for (p, g) in state.branches_mut().zip(grad.branches()) {
            for (z, dz) in p.logits.data_mut().iter_mut().zip(g.logits.data()) {
                *z = (*z - cfg.step_size * dz).clamp(-LOGIT_LIMIT, LOGIT_LIMIT);
            }
            for (r, dr) in p.radii.data_mut().iter_mut().zip(g.radii.data()) {
                *r = (*r - cfg.step_size * dr).max(0.0);
            }
        }
        let l = problem.loss(&state)?;
        if !l.is_finite() {
            return Err(Error::NonFinite {
                iteration: it,
                value: l,
            });
        }
        trace.push(l);
    }
    let outside_mass_initial =
        outside_inner_mass(&initial.inner.probabilities(), &problem.gt_outer, &problem.soft)?;
    let outside_mass_final =
        outside_inner_mass(&state.inner.probabilities(), &problem.gt_outer, &problem.soft)?;
    Ok(FitResult {
        initial,
        fitted: state,
        loss_trace: trace,
        outside_mass_initial,
        outside_mass_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn targets(mask: &LabelMask) -> BranchTargets {
        BranchTargets {
            d: boundary_distance_field(mask),
            r: radial_field(mask, 8).unwrap(),
        }
    }

    fn problem(kind: PenaltyKind) -> FitProblem {
        let mut outer = LabelMask::zeros(12, 12);
        let mut inner = LabelMask::zeros(12, 12);
        for r in 2..10 {
            for c in 2..10 {
                outer.set(r, c, 1);
                if (4..7).contains(&r) && (4..7).contains(&c) {
                    inner.set(r, c, 1);
                }
            }
        }
        FitProblem {
            inner: targets(&inner),
            outer: targets(&outer),
            inner_b: None,
            gt_outer: to_semantic(&outer),
            loss: LossConfig::default(),
            kind,
            soft: SoftMaskParams::default(),
        }
    }

    #[test]
    fn zero_iterations_returns_initial_state() {
        let p = problem(PenaltyKind::Wbr);
        let cfg = FitConfig {
            iterations: 0,
            ..Default::default()
        };
        let res = toy_fit(&p, &cfg).unwrap();
        assert_eq!(res.initial, res.fitted);
        assert_eq!(res.loss_trace.len(), 1);
        assert_eq!(res.outside_mass_initial, res.outside_mass_final);
    }

    #[test]
    fn fit_is_deterministic() {
        let p = problem(PenaltyKind::Wbr);
        let cfg = FitConfig {
            iterations: 20,
            seed: 7,
            ..Default::default()
        };
        let a = toy_fit(&p, &cfg).unwrap();
        let b = toy_fit(&p, &cfg).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.fitted, b.fitted);
    }

    #[test]
    fn small_steps_do_not_increase_loss() {
        let p = problem(PenaltyKind::Wbr);
        let cfg = FitConfig {
            iterations: 50,
            step_size: 0.05,
            seed: 3,
            ..Default::default()
        };
        let res = toy_fit(&p, &cfg).unwrap();
        for w in res.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
        assert!(res.loss_trace.last().unwrap() < &res.loss_trace[0]);
    }

    #[test]
    fn flatten_round_trips() {
        let p = problem(PenaltyKind::None);
        let s = p.initial_state(&FitConfig::default()).unwrap();
        let flat = s.flatten();
        assert_eq!(s.from_flat(&flat).unwrap(), s);
        assert!(s.from_flat(&flat[1..]).is_err());
    }

    #[test]
    fn two_inner_kinds_require_second_branch() {
        let p = problem(PenaltyKind::Exclusive);
        assert!(toy_fit(&p, &FitConfig::default()).is_err());
    }

    #[test]
    fn bad_step_rejected() {
        let p = problem(PenaltyKind::None);
        let cfg = FitConfig {
            step_size: 0.0,
            ..Default::default()
        };
        assert!(toy_fit(&p, &cfg).is_err());
    }
}

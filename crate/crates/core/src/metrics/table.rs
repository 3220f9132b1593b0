use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LabelMask;
use crate::loss::LossConfig;
use crate::metrics::matching::{check_tau, MatchTable, Overlaps};
use crate::metrics::nesting::{
    containment, jtpr_one_to_many_from, jtpr_one_to_one_from, ContainmentMap, Jtpr, OuterPolicy,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nesting {
    #[default]
    OneToOne,
    OneToMany,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Metrics per image, then the arithmetic mean.
    #[default]
    PerImageMean,
    /// Counts summed over images, then one metric.
    Pooled,
}

macro_rules! kebab_enum_str {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $(Self::$v => $s),* })
            }
        }

        impl std::str::FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$v),)*
                    other => Err(Error::InvalidParameter(format!("unknown value '{other}'"))),
                }
            }
        }
    };
}

kebab_enum_str!(Nesting { OneToOne => "one-to-one", OneToMany => "one-to-many" });
kebab_enum_str!(Aggregation { PerImageMean => "per-image-mean", Pooled => "pooled" });

/// The default threshold grid 0.1, 0.2, ..., 0.9.
pub fn default_taus() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

pub fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::InvalidParameter("tau grid is empty".into()));
    }
    for &t in taus {
        check_tau(t)?;
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("tau grid must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub taus: Vec<f64>,
    pub nesting: Nesting,
    pub aggregation: Aggregation,
    pub outer_policy: OuterPolicy,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            taus: default_taus(),
            nesting: Nesting::default(),
            aggregation: Aggregation::default(),
            outer_policy: OuterPolicy::default(),
        }
    }
}

/// Ground truth and prediction of one image. The outer category is optional;
/// without it only single-category metrics are produced.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalImage {
    pub gt_inner: LabelMask,
    pub pred_inner: LabelMask,
    pub outer: Option<(LabelMask, LabelMask)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub iou_r: f64,
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub tau: f64,
    pub inner: CategoryRow,
    pub outer: Option<CategoryRow>,
    pub jtpr_inner: Option<f64>,
    pub jtpr_outer: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: MetricConfig,
    /// Loss settings of the run that produced the predictions.
    pub loss: LossConfig,
    pub images: usize,
    pub rows: Vec<MetricRow>,
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn nested(&self) -> bool {
        self.rows.first().is_some_and(|r| r.outer.is_some())
    }
}

struct PreparedImage {
    inner: Overlaps,
    outer: Option<(Overlaps, ContainmentMap)>,
}

fn prepare(img: &EvalImage) -> Result<PreparedImage> {
    let inner = Overlaps::new(&img.gt_inner, &img.pred_inner)?;
    let outer = match &img.outer {
        Some((gt, pred)) => Some((Overlaps::new(gt, pred)?, containment(&img.gt_inner, gt)?)),
        None => None,
    };
    Ok(PreparedImage { inner, outer })
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn value(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Default)]
struct CategoryAcc {
    iou_r: Mean,
    ap: Mean,
    iou_sum: f64,
    n_gt: usize,
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl CategoryAcc {
    fn push(&mut self, t: &MatchTable, per_image: bool) {
        self.tp += t.tp;
        self.fp += t.fp;
        self.fn_ += t.fn_;
        self.iou_sum += t.iou_sum();
        self.n_gt += t.n_gt;
        if per_image && t.n_gt > 0 {
            self.iou_r.push(t.iou_recall().expect("n_gt > 0"));
            self.ap.push(t.average_precision().expect("n_gt > 0"));
        }
    }

    fn finish(&self, per_image: bool, what: &'static str) -> Result<CategoryRow> {
        let (iou_r, ap) = if per_image {
            (self.iou_r.value(), self.ap.value())
        } else if self.n_gt > 0 {
            (
                Some(self.iou_sum / self.n_gt as f64),
                Some(self.tp as f64 / (self.tp + self.fn_ + self.fp) as f64),
            )
        } else {
            (None, None)
        };
        match (iou_r, ap) {
            (Some(iou_r), Some(ap)) => Ok(CategoryRow {
                iou_r,
                ap,
                tp: self.tp,
                fp: self.fp,
                fn_: self.fn_,
            }),
            _ => Err(Error::EmptyGroundTruth(what)),
        }
    }
}

/// Evaluate every image at every threshold of `cfg.taus`.
///
/// Images are processed in parallel; the result does not depend on the
/// number of threads.
pub fn metric_table(images: &[EvalImage], cfg: &MetricConfig, loss: &LossConfig) -> Result<MetricReport> {
    if images.is_empty() {
        return Err(Error::InvalidParameter("no images to evaluate".into()));
    }
    check_taus(&cfg.taus)?;
    let nested = images[0].outer.is_some();
    if images.iter().any(|i| i.outer.is_some() != nested) {
        return Err(Error::InvalidParameter(
            "either every image or no image must carry the outer category".into(),
        ));
    }
    let prepared: Vec<PreparedImage> = images.par_iter().map(prepare).collect::<Result<_>>()?;
    let per_image = cfg.aggregation == Aggregation::PerImageMean;

    let mut warnings = Vec::new();
    if per_image {
        for (i, p) in prepared.iter().enumerate() {
            if p.inner.gt_ids().is_empty() {
                warnings.push(format!("image {i}: no inner ground-truth objects, skipped"));
            }
            if let Some((o, _)) = &p.outer {
                if o.gt_ids().is_empty() {
                    warnings.push(format!("image {i}: no outer ground-truth objects, skipped"));
                }
            }
        }
    }

    if cfg.nesting == Nesting::OneToOne {
        for (i, p) in prepared.iter().enumerate() {
            let Some((_, map)) = &p.outer else { continue };
            if let Some((o, n)) = map.inners_by_outer().iter().find(|(_, v)| v.len() > 1) {
                warnings.push(format!(
                    "image {i}: outer object {o} contains {} inner objects; one-to-one JTPR_outer can exceed 1, consider one-to-many",
                    n.len()
                ));
            }
        }
    }

    let rows: Vec<MetricRow> = cfg
        .taus
        .par_iter()
        .map(|&tau| row_at(&prepared, tau, cfg, per_image))
        .collect::<Result<_>>()?;
    Ok(MetricReport {
        config: cfg.clone(),
        loss: *loss,
        images: images.len(),
        rows,
        warnings,
    })
}

fn row_at(prepared: &[PreparedImage], tau: f64, cfg: &MetricConfig, per_image: bool) -> Result<MetricRow> {
    let mut inner_acc = CategoryAcc::default();
    let mut outer_acc = CategoryAcc::default();
    let (mut j_inner, mut j_outer) = (Mean::default(), Mean::default());
    let (mut joint_inner, mut joint_outer, mut n_inner, mut n_outer) = (0, 0, 0, 0);
    for p in prepared {
        let inner = p.inner.match_at(tau)?;
        inner_acc.push(&inner, per_image);
        let Some((overlaps, map)) = &p.outer else { continue };
        let outer = overlaps.match_at(tau)?;
        outer_acc.push(&outer, per_image);
        if inner.n_gt == 0 || outer.n_gt == 0 {
            // pooled totals still count the objects of the non-empty side
            n_inner += inner.n_gt;
            n_outer += outer.n_gt;
            continue;
        }
        let j: Jtpr = match cfg.nesting {
            Nesting::OneToOne => jtpr_one_to_one_from(map, &inner, &outer)?,
            Nesting::OneToMany => jtpr_one_to_many_from(map, &inner, &outer, cfg.outer_policy)?,
        };
        j_inner.push(j.inner);
        j_outer.push(j.outer);
        joint_inner += j.inner_joint;
        joint_outer += j.outer_joint;
        n_inner += j.n_inner;
        n_outer += j.n_outer;
    }
    let nested = prepared[0].outer.is_some();
    let (jtpr_inner, jtpr_outer) = if !nested {
        (None, None)
    } else if per_image {
        (
            Some(j_inner.value().ok_or(Error::EmptyGroundTruth("no image has both categories"))?),
            Some(j_outer.value().ok_or(Error::EmptyGroundTruth("no image has both categories"))?),
        )
    } else {
        if n_inner == 0 || n_outer == 0 {
            return Err(Error::EmptyGroundTruth("no ground-truth objects in any image"));
        }
        (
            Some(joint_inner as f64 / n_inner as f64),
            Some(joint_outer as f64 / n_outer as f64),
        )
    };
    Ok(MetricRow {
        tau,
        inner: inner_acc.finish(per_image, "no image has inner ground-truth objects")?,
        outer: if nested {
            Some(outer_acc.finish(per_image, "no image has outer ground-truth objects")?)
        } else {
            None
        },
        jtpr_inner,
        jtpr_outer,
    })
}

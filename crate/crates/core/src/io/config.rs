use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ReportFormat;
use crate::loss::{FitConfig, LossConfig, PenaltyKind};
use crate::metrics::{check_taus, MetricConfig};
use crate::nms::NmsConfig;
use crate::synth::SceneSpec;

/// Mask files of one evaluation image. Outer paths come as a pair or not at all.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagePaths {
    pub gt_inner: PathBuf,
    pub pred_inner: PathBuf,
    pub gt_outer: Option<PathBuf>,
    pub pred_outer: Option<PathBuf>,
}

impl ImagePaths {
    fn all(&self) -> impl Iterator<Item = &PathBuf> {
        [&self.gt_inner, &self.pred_inner]
            .into_iter()
            .chain(self.gt_outer.as_ref())
            .chain(self.pred_outer.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldPaths {
    pub d: PathBuf,
    pub r: PathBuf,
}

/// Everything a run needs, loadable from TOML. Every section is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the scene and fit seeds when set.
    pub seed: Option<u64>,
    pub rays: usize,
    pub format: ReportFormat,
    pub penalty: PenaltyKind,
    pub images: Vec<ImagePaths>,
    pub fields: Option<FieldPaths>,
    pub metrics: MetricConfig,
    pub loss: LossConfig,
    pub nms: NmsConfig,
    pub scene: SceneSpec,
    pub fit: FitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            rays: 32,
            format: ReportFormat::default(),
            penalty: PenaltyKind::default(),
            images: Vec::new(),
            fields: None,
            metrics: MetricConfig::default(),
            loss: LossConfig::default(),
            nms: NmsConfig::default(),
            scene: SceneSpec::default(),
            fit: FitConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.apply_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Copy the top-level seed into the scene and fit sections.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.scene.seed = s;
            self.fit.seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_taus(&self.metrics.taus)?;
        self.loss.validate(self.penalty)?;
        if self.rays < 3 {
            return Err(Error::DegenerateRayCount(self.rays));
        }
        for (name, v) in [
            ("nms.prob_thresh", self.nms.prob_thresh),
            ("nms.overlap_thresh", self.nms.overlap_thresh),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        for img in &self.images {
            if img.gt_outer.is_some() != img.pred_outer.is_some() {
                return Err(Error::Config(format!(
                    "image {}: gt_outer and pred_outer must be given together",
                    img.gt_inner.display()
                )));
            }
        }
        self.scene.validate()
    }

    /// Every referenced file must exist.
    pub fn check_paths(&self) -> Result<()> {
        let fields = self.fields.iter().flat_map(|f| [&f.d, &f.r]);
        for p in self.images.iter().flat_map(ImagePaths::all).chain(fields) {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist"),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Aggregation, Nesting};

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml_str(
            r#"
            seed = 7
            format = "json"
            [metrics]
            taus = [0.5, 0.75]
            nesting = "one-to-many"
            aggregation = "pooled"
            outer_policy = "all"
            [loss]
            lambda3 = 0.0
            [[images]]
            gt_inner = "a.sseg"
            pred_inner = "b.sseg"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.scene.seed, 7);
        assert_eq!(cfg.fit.seed, 7);
        assert_eq!(cfg.format, ReportFormat::Json);
        assert_eq!(cfg.metrics.nesting, Nesting::OneToMany);
        assert_eq!(cfg.metrics.aggregation, Aggregation::Pooled);
        assert_eq!(cfg.loss.lambda3, 0.0);
        assert_eq!(cfg.loss.lambda1, 0.2);
        assert_eq!(cfg.images.len(), 1);
        assert!(cfg.check_paths().is_err());
        let again = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_values_rejected() {
        for text in [
            "[metrics]\ntaus = [0.0, 0.5]",
            "[metrics]\ntaus = [0.5, 0.4]",
            "rays = 2",
            "unknown = 1",
            "[nms]\nprob_thresh = 1.5",
            "[[images]]\ngt_inner = 'a'\npred_inner = 'b'\ngt_outer = 'c'",
            "[scene]\nn_outer = 0",
        ] {
            assert!(RunConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}

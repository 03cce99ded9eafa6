//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 7
//! out = "runs/indoor"          # optional, the CLI `--out` overrides it
//! target_mode = "absolute"     # or "correction"
//!
//! [[sources]]
//! preset = "indoor-40"         # or: path = "data/campaign.ftm"
//!
//! [split]
//! train_fraction = 0.7
//! folds = 5
//!
//! [cv]
//! budget = 50
//! strategy = "random"          # "coarse-grid", "surrogate"
//!
//! [[estimators]]
//! variant = "tree"
//! space = { min_leaf_size = { int_range = [1, 64] } }
//! ```

use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::IoError;
use crate::ml::{CvConfig, Domain, HyperSpace, Hyperparams, SplitSpec, TargetMode, Variant};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Mandatory: every run must be reproducible.
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub target_mode: TargetMode,
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SourceConfig {
    Preset { preset: String },
    PresetFile { preset_file: PathBuf },
    Path { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub folds: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        let s = SplitSpec::default();
        SplitSection {
            train_fraction: s.train_fraction,
            folds: s.folds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub budget: usize,
    pub strategy: crate::ml::SearchStrategy,
}

impl Default for CvSection {
    fn default() -> Self {
        let c = CvConfig::default();
        CvSection {
            budget: c.budget,
            strategy: c.strategy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub variant: Variant,
    /// Fixed overrides applied before the search, by tunable name.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Search ranges; the variant's defaults when absent. An empty table
    /// skips the search.
    pub space: Option<BTreeMap<String, Domain>>,
    pub budget: Option<usize>,
}

impl EstimatorConfig {
    pub fn new(variant: Variant) -> Self {
        EstimatorConfig {
            variant,
            params: BTreeMap::new(),
            space: None,
            budget: None,
        }
    }

    pub fn base_hyperparams(&self, seed: u64) -> Result<Hyperparams, IoError> {
        let mut hp = Hyperparams::default_for(self.variant).with_seed(seed);
        for (k, v) in &self.params {
            hp.set(k, *v).map_err(|e| IoError::Config(e.to_string()))?;
        }
        Ok(hp)
    }

    pub fn hyper_space(&self) -> HyperSpace {
        match &self.space {
            Some(p) => HyperSpace { params: p.clone() },
            None => HyperSpace::default_for(self.variant),
        }
    }
}

fn default_estimators() -> Vec<EstimatorConfig> {
    Variant::ALL.into_iter().map(EstimatorConfig::new).collect()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, IoError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train_fraction,
            folds: self.split.folds,
            rng_seed: self.seed,
        }
    }

    pub fn cv_config(&self, est: &EstimatorConfig) -> CvConfig {
        CvConfig {
            folds: self.split.folds,
            budget: est.budget.unwrap_or(self.cv.budget),
            strategy: self.cv.strategy,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.sources.is_empty() {
            return Err(IoError::Config("at least one source is required".into()));
        }
        if self.estimators.is_empty() {
            return Err(IoError::Config("at least one estimator is required".into()));
        }
        self.split_spec()
            .validate()
            .map_err(|e| IoError::Config(e.to_string()))?;
        for e in &self.estimators {
            e.base_hyperparams(self.seed)?;
        }
        Ok(())
    }
}

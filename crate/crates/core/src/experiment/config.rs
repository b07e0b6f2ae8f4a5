use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{digest_hex, DgpConfig};
use crate::deepace::ModelConfig;
use crate::error::{Error, Result};

/// Estimators the benchmark knows how to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Deepace,
    DeepaceUntargeted,
    IterativeGcomp,
    LtmleGlm,
    Msm,
    Gformula,
    /// Returns the oracle effect; used to validate the harness.
    Oracle,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Deepace,
        EstimatorKind::DeepaceUntargeted,
        EstimatorKind::IterativeGcomp,
        EstimatorKind::LtmleGlm,
        EstimatorKind::Msm,
        EstimatorKind::Gformula,
        EstimatorKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Deepace => "deepace",
            EstimatorKind::DeepaceUntargeted => "deepace_untargeted",
            EstimatorKind::IterativeGcomp => "iterative_gcomp",
            EstimatorKind::LtmleGlm => "ltmle_glm",
            EstimatorKind::Msm => "msm",
            EstimatorKind::Gformula => "gformula",
            EstimatorKind::Oracle => "oracle",
        }
    }

    pub fn uses_network(self) -> bool {
        matches!(self, EstimatorKind::Deepace | EstimatorKind::DeepaceUntargeted)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

/// Settings of the regression-based estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub lambda: f64,
    /// Monte Carlo paths per patient for the parametric G-formula.
    pub n_mc: usize,
    /// Use the data-generating propensities instead of fitted ones.
    pub oracle_propensities: bool,
    /// Drop covariates from the outcome regressions.
    pub omit_covariates: bool,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        BaselineSettings {
            lambda: 1e-3,
            n_mc: 10,
            oracle_propensities: false,
            omit_covariates: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSettings {
    /// Tune once per setup before the sweep instead of using `[deepace]`.
    pub enabled: bool,
    pub n_iter: usize,
    /// Fraction of patients used for training; the rest validates.
    pub train_fraction: f64,
}

impl Default for TuneSettings {
    fn default() -> Self {
        TuneSettings {
            enabled: false,
            n_iter: 30,
            train_fraction: 0.8,
        }
    }
}

/// A benchmark sweep: estimators x setups x replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every data and run seed is derived from it.
    pub seed: u64,
    /// Replicate indices.
    pub seeds: Vec<u64>,
    pub estimators: Vec<EstimatorKind>,
    /// 1-based setup ids.
    pub setups: Vec<usize>,
    pub dgp: DgpConfig,
    pub deepace: ModelConfig,
    pub baselines: BaselineSettings,
    pub tune: TuneSettings,
    /// Output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Parallel jobs; 0 lets the runtime decide.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let dgp = DgpConfig::synthetic();
        ExperimentConfig {
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            estimators: vec![EstimatorKind::IterativeGcomp],
            setups: vec![1, 2, 3],
            deepace: ModelConfig::for_covariates(dgp.p),
            dgp,
            baselines: BaselineSettings::default(),
            tune: TuneSettings::default(),
            out: None,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::Config("at least one estimator is required".into()));
        }
        if self.setups.is_empty() {
            return Err(Error::Config("at least one setup is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let Some(bad) = self.setups.iter().find(|&&s| !(1..=3).contains(&s)) {
            return Err(Error::Config(format!("setup ids are 1..=3, got {bad}")));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.estimators {
            if !seen.insert(*e) {
                return Err(Error::Config(format!("estimator `{e}` listed twice")));
            }
        }
        self.dgp.validate()?;
        self.deepace.validate_for_training()?;
        if self.tune.enabled && self.tune.n_iter == 0 {
            return Err(Error::Config("tune.n_iter must be at least 1".into()));
        }
        if !(self.tune.train_fraction > 0.0 && self.tune.train_fraction < 1.0) {
            return Err(Error::Config("tune.train_fraction must lie in (0, 1)".into()));
        }
        if self.baselines.n_mc == 0 {
            return Err(Error::Config("baselines.n_mc must be at least 1".into()));
        }
        Ok(())
    }

    /// Hash of everything that influences results; output location and job
    /// count are excluded.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        canonical.jobs = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        digest_hex(json.as_bytes())
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters for one DeepACE arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// LSTM and head width.
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    /// Weight of the propensity loss.
    pub alpha: f64,
    /// Weight of the targeting loss; zero trains the untargeted variant.
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 12,
            learning_rate: 1e-3,
            batch_size: 64,
            dropout: 0.1,
            alpha: 0.1,
            beta: 0.05,
            epochs: 100,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Defaults with the hidden width set to `2p`.
    pub fn for_covariates(p: usize) -> Self {
        ModelConfig {
            hidden: 2 * p.max(1),
            ..ModelConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks every field except `epochs`, which may be zero to obtain the
    /// initialised network.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.hidden == 0 {
            return fail("hidden size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be non-negative, got {}", self.beta));
        }
        Ok(())
    }

    /// Full validation for user-supplied configurations.
    pub fn validate_for_training(&self) -> Result<()> {
        self.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn targeted(&self) -> bool {
        self.beta > 0.0
    }
}

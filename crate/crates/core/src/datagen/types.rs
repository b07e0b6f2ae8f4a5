use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which generator produced a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpKind {
    /// Non-linear autoregressive covariates with confounded treatments.
    Synthetic,
    /// Same covariate process, with level-dependent treatment assignment and
    /// a trigonometric outcome model.
    SemiSynthetic,
}

/// How treatments are assigned in the factual world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TreatmentMode {
    /// `A_t = 1{π_t > 0.5}` with history-dependent `π_t`.
    #[default]
    Confounded,
    /// `A_t = 1{ε_t^A > 0}`: a fair coin independent of history.
    Randomized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub kind: DgpKind,
    pub n: usize,
    pub horizon: usize,
    pub p: usize,
    pub lag: usize,
    pub noise_x: f64,
    pub noise_a: f64,
    pub noise_y: f64,
    pub seed: u64,
    /// Replace `tanh` and `tan` by the identity (synthetic kind only).
    pub linear: bool,
    /// Force the covariate treatment weights and outcome treatment weights to
    /// zero so that no path from treatment to outcome remains (synthetic only).
    pub sever_treatment: bool,
    pub treatment: TreatmentMode,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl DgpConfig {
    /// `N = 1000, T = 15, p = 6, h = 5`.
    pub fn synthetic() -> Self {
        DgpConfig {
            kind: DgpKind::Synthetic,
            n: 1000,
            horizon: 15,
            p: 6,
            lag: 5,
            noise_x: 0.1,
            noise_a: 0.2,
            noise_y: 0.1,
            seed: 0,
            linear: false,
            sever_treatment: false,
            treatment: TreatmentMode::Confounded,
        }
    }

    /// `N = 1000, T = 15, p = 10, h = 8`.
    pub fn semi_synthetic() -> Self {
        DgpConfig {
            kind: DgpKind::SemiSynthetic,
            p: 10,
            lag: 8,
            noise_a: 0.5,
            ..Self::synthetic()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n < 1 {
            return fail("n must be at least 1".into());
        }
        if self.horizon < 1 {
            return fail("horizon must be at least 1".into());
        }
        if self.p < 1 {
            return fail("p must be at least 1".into());
        }
        if self.lag < 1 {
            return fail("lag must be at least 1".into());
        }
        for (name, s) in [
            ("noise_x", self.noise_x),
            ("noise_a", self.noise_a),
            ("noise_y", self.noise_y),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return fail(format!("{name} must be a finite non-negative scale, got {s}"));
            }
        }
        if self.kind == DgpKind::SemiSynthetic && (self.linear || self.sever_treatment) {
            return fail("`linear` and `sever_treatment` apply to the synthetic kind only".into());
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        digest_hex(json.as_bytes())
    }
}

pub fn digest_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Weights drawn once per dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpWeights {
    /// Autoregressive covariate weights `α_i`.
    pub alpha: Vec<f64>,
    /// Treatment-to-covariate weights `β_i`.
    pub beta: Vec<f64>,
    /// Signs `γ_i ∈ {-1, 1}`.
    pub gamma: Vec<f64>,
    /// Outcome treatment weights `w_i = (-1)^{i+1} / i` (synthetic).
    pub w: Vec<f64>,
    /// Lag coefficients `c_i = (-1)^i / (1 + i)` (semi-synthetic).
    pub c: Vec<f64>,
}

/// Exogenous noise of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    /// `T x p`
    pub eps_x: Vec<Vec<f64>>,
    pub eps_a: Vec<f64>,
    pub eps_y: Vec<f64>,
}

/// Everything needed to re-simulate a dataset under forced treatments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseBundle {
    pub config: DgpConfig,
    pub weights: DgpWeights,
    pub records: Vec<NoiseRecord>,
}

/// One patient: covariates `X_t`, treatments `A_t` and outcomes `Y_{t+1}`
/// for `t = 1..T`. Vectors are zero-based, so `y[t - 1]` is `Y_{t+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub x: Vec<Vec<f64>>,
    pub a: Vec<u8>,
    pub y: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    /// Final outcome `Y_{T+1}`.
    pub fn final_outcome(&self) -> f64 {
        *self.y.last().expect("non-empty trajectory")
    }

    /// Lagged outcome `Y_t` visible at step `t` (1-based); `Y_1 = 0`.
    pub fn lagged_outcome(&self, t: usize) -> f64 {
        lagged(&self.y, t)
    }

    /// Mean covariate `X̄_t` (1-based).
    pub fn covariate_mean(&self, t: usize) -> f64 {
        mean(&self.x[t - 1])
    }

    pub(crate) fn check(&self, p: usize, horizon: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(format!("trajectory {}: {msg}", self.id)));
        if self.a.len() != horizon || self.y.len() != horizon || self.x.len() != horizon {
            return bad(format!(
                "expected {horizon} steps, got x={}, a={}, y={}",
                self.x.len(),
                self.a.len(),
                self.y.len()
            ));
        }
        if let Some(row) = self.x.iter().find(|r| r.len() != p) {
            return bad(format!("expected {p} covariates, got {}", row.len()));
        }
        if self.a.iter().any(|&a| a > 1) {
            return bad("non-binary treatment".into());
        }
        let finite = self.x.iter().flatten().chain(&self.y).all(|v| v.is_finite());
        if !finite {
            return bad("non-finite value".into());
        }
        Ok(())
    }
}

pub(crate) fn lagged(y: &[f64], t: usize) -> f64 {
    if t >= 2 {
        y[t - 2]
    } else {
        0.0
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `N` trajectories sharing horizon and covariate dimension, plus the noise
/// needed by the oracle when the data are simulated.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub p: usize,
    pub horizon: usize,
    pub noise: Option<NoiseBundle>,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, noise: Option<NoiseBundle>) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::Contract("dataset must contain at least one trajectory".into()))?;
        let horizon = first.horizon();
        let p = first.x.first().map_or(0, Vec::len);
        if horizon < 1 || p < 1 {
            return Err(Error::Contract("trajectories need T >= 1 and p >= 1".into()));
        }
        for tr in &trajectories {
            tr.check(p, horizon)?;
        }
        if let Some(nb) = &noise {
            if nb.records.len() != trajectories.len() {
                return Err(Error::Contract(format!(
                    "{} noise records for {} trajectories",
                    nb.records.len(),
                    trajectories.len()
                )));
            }
        }
        Ok(Dataset {
            trajectories,
            p,
            horizon,
            noise,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Fingerprint of the DGP configuration, when known.
    pub fn config_fingerprint(&self) -> Option<String> {
        self.noise.as_ref().map(|n| n.config.fingerprint())
    }

    /// Content hash of the observed trajectories.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(self.len() * self.horizon * (self.p + 2) * 8);
        for tr in &self.trajectories {
            bytes.extend_from_slice(&(tr.id as u64).to_le_bytes());
            for t in 0..self.horizon {
                for v in &tr.x[t] {
                    bytes.extend_from_slice(&v.to_bits().to_le_bytes());
                }
                bytes.push(tr.a[t]);
                bytes.extend_from_slice(&tr.y[t].to_bits().to_le_bytes());
            }
        }
        digest_hex(&bytes)
    }

    /// Subset by index, keeping noise records aligned.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let trajectories = indices.iter().map(|&i| self.trajectories[i].clone()).collect();
        let noise = self.noise.as_ref().map(|nb| NoiseBundle {
            config: nb.config.clone(),
            weights: nb.weights.clone(),
            records: indices.iter().map(|&i| nb.records[i].clone()).collect(),
        });
        Dataset::new(trajectories, noise)
    }

    pub fn final_outcomes(&self) -> Vec<f64> {
        self.trajectories.iter().map(Trajectory::final_outcome).collect()
    }
}

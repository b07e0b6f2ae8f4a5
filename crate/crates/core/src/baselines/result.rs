use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::gcomp::{iterative_gcomp, ltmle_glm, RegressorSpec};
use super::gformula::{parametric_gformula, GFormulaOptions};
use super::msm::{msm_ipw, MsmOptions};
use crate::datagen::Dataset;
use crate::error::{Error, Result};

/// Outcome of one estimator call on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub method: String,
    pub theta_a: Option<f64>,
    pub theta_b: Option<f64>,
    pub psi: f64,
    pub seed: u64,
    pub wall_ms: f64,
    pub diagnostics: Vec<String>,
}

impl EstimatorResult {
    fn finish(mut self, started: Instant) -> Result<Self> {
        self.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        if !self.psi.is_finite() {
            return Err(Error::Contract(format!("{} returned a non-finite effect", self.method)));
        }
        Ok(self)
    }

    fn arms(method: &str, seed: u64, theta_a: f64, theta_b: f64) -> Self {
        EstimatorResult {
            method: method.into(),
            theta_a: Some(theta_a),
            theta_b: Some(theta_b),
            psi: theta_a - theta_b,
            seed,
            wall_ms: 0.0,
            diagnostics: Vec::new(),
        }
    }
}

pub fn iterative_gcomp_ace(
    data: &Dataset,
    treated: &[u8],
    control: &[u8],
    spec: &RegressorSpec,
) -> Result<EstimatorResult> {
    let started = Instant::now();
    let a = iterative_gcomp(data, treated, spec)?;
    let b = iterative_gcomp(data, control, spec)?;
    EstimatorResult::arms("iterative_gcomp", 0, a, b).finish(started)
}

pub fn ltmle_ace(
    data: &Dataset,
    treated: &[u8],
    control: &[u8],
    spec: &RegressorSpec,
    propensities: &[Vec<f64>],
) -> Result<EstimatorResult> {
    let started = Instant::now();
    let a = ltmle_glm(data, treated, spec, propensities)?;
    let b = ltmle_glm(data, control, spec, propensities)?;
    let mut res = EstimatorResult::arms("ltmle_glm", 0, a.theta, b.theta);
    for (arm, fit) in [("a", &a), ("b", &b)] {
        for s in &fit.steps {
            if s.skipped {
                res.diagnostics
                    .push(format!("arm {arm}: no follower at t={}, fluctuation skipped", s.step));
            }
        }
        let worst = fit.steps.iter().map(|s| s.normal_residual.abs()).fold(0.0, f64::max);
        res.diagnostics
            .push(format!("arm {arm}: max normal-equation residual {worst:e}"));
    }
    res.finish(started)
}

pub fn msm_ace(data: &Dataset, treated: &[u8], control: &[u8], opts: &MsmOptions) -> Result<EstimatorResult> {
    let started = Instant::now();
    let fit = msm_ipw(data, treated, control, opts)?;
    let (lo, hi) = fit
        .weights
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), w| (lo.min(*w), hi.max(*w)));
    EstimatorResult {
        method: "msm".into(),
        theta_a: None,
        theta_b: None,
        psi: fit.psi,
        seed: 0,
        wall_ms: 0.0,
        diagnostics: vec![format!("stabilized weights in [{lo:e}, {hi:e}]")],
    }
    .finish(started)
}

pub fn gformula_ace(data: &Dataset, treated: &[u8], control: &[u8], opts: &GFormulaOptions) -> Result<EstimatorResult> {
    let started = Instant::now();
    let a = parametric_gformula(data, treated, opts)?;
    let b = parametric_gformula(data, control, opts)?;
    let mut res = EstimatorResult::arms("gformula", opts.seed, a.theta, b.theta);
    res.diagnostics.extend(a.diagnostics);
    res.diagnostics.extend(b.diagnostics);
    res.diagnostics.push(format!(
        "mc standard errors {:e} / {:e}",
        a.mc_standard_error, b.mc_standard_error
    ));
    res.finish(started)
}

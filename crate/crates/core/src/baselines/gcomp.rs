use serde::{Deserialize, Serialize};

use super::features::{at_step, compensated_sum, outcome_features, prob_of};
use super::regress::fit_ridge;
use crate::datagen::Dataset;
use crate::error::{Error, Result};

/// Outcome regression settings shared by the sequential estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorSpec {
    pub lambda: f64,
    /// When false, covariates are dropped from the outcome regressions and
    /// only lagged outcomes and treatments remain.
    pub use_covariates: bool,
}

impl Default for RegressorSpec {
    fn default() -> Self {
        RegressorSpec {
            lambda: 1e-3,
            use_covariates: true,
        }
    }
}

/// Diagnostics of one fluctuation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtmleStep {
    /// 1-based index `t` of the targeted output `Q_t`.
    pub step: usize,
    pub epsilon: f64,
    /// `Σ_i H_t (Q_{t+1}^a − Q̃_t)` after the update.
    pub normal_residual: f64,
    pub max_clever_covariate: f64,
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtmleFit {
    pub theta: f64,
    pub steps: Vec<LtmleStep>,
}

fn check_plan(data: &Dataset, plan: &[u8]) -> Result<()> {
    if plan.len() != data.horizon || plan.iter().any(|&a| a > 1) {
        return Err(Error::Contract(format!(
            "plan must be a binary sequence of length {}",
            data.horizon
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Backward sequence of outcome regressions. With `propensities`, each step
/// is followed by a linear fluctuation along the clever covariate.
fn sequential(
    data: &Dataset,
    plan: &[u8],
    spec: &RegressorSpec,
    propensities: Option<&[Vec<f64>]>,
) -> Result<LtmleFit> {
    check_plan(data, plan)?;
    let trs = &data.trajectories;
    if let Some(g) = propensities {
        if g.len() != trs.len() || g.iter().any(|row| row.len() != data.horizon) {
            return Err(Error::Contract("propensity matrix does not match the dataset".into()));
        }
    }
    let mut target = data.final_outcomes();
    let mut steps = Vec::new();
    for k in (0..data.horizon).rev() {
        let step = k + 2;
        let observed: Vec<Vec<f64>> = trs
            .iter()
            .map(|tr| outcome_features(tr, k, &tr.a, spec.use_covariates))
            .collect();
        let fit = fit_ridge(&observed, &target, spec.lambda).map_err(|e| at_step(e, step))?;
        let mut planned: Vec<f64> = trs
            .iter()
            .map(|tr| fit.predict(&outcome_features(tr, k, plan, spec.use_covariates)))
            .collect();
        if let Some(g) = propensities {
            let fitted: Vec<f64> = observed.iter().map(|f| fit.predict(f)).collect();
            // Clever covariate with the current treatment set to the plan,
            // and the same covariate restricted to patients who followed it.
            let mut under_plan = Vec::with_capacity(trs.len());
            let mut clever = Vec::with_capacity(trs.len());
            for (tr, gi) in trs.iter().zip(g) {
                let mut prefix = 1.0;
                for l in 0..k {
                    let comply = if tr.a[l] == plan[l] { 1.0 } else { 0.0 };
                    prefix *= comply / prob_of(gi[l], plan[l]);
                }
                let hp = prefix / prob_of(gi[k], plan[k]);
                under_plan.push(hp);
                clever.push(if tr.a[k] == plan[k] { hp } else { 0.0 });
            }
            let denom = compensated_sum(clever.iter().map(|h| h * h));
            let residual = |eps: f64| {
                compensated_sum(
                    clever
                        .iter()
                        .zip(&target)
                        .zip(&fitted)
                        .map(|((h, y), q)| h * (y - (q + eps * h))),
                )
            };
            let max_h = clever.iter().fold(0.0f64, |m, h| m.max(*h));
            if denom == 0.0 {
                steps.push(LtmleStep {
                    step,
                    epsilon: 0.0,
                    normal_residual: 0.0,
                    max_clever_covariate: 0.0,
                    skipped: true,
                });
            } else {
                let mut eps =
                    compensated_sum(clever.iter().zip(&target).zip(&fitted).map(|((h, y), q)| h * (y - q))) / denom;
                let mut r = residual(eps);
                for _ in 0..3 {
                    let next = eps + r / denom;
                    let rn = residual(next);
                    if rn.abs() >= r.abs() {
                        break;
                    }
                    eps = next;
                    r = rn;
                }
                for (q, h) in planned.iter_mut().zip(&under_plan) {
                    *q += eps * h;
                }
                steps.push(LtmleStep {
                    step,
                    epsilon: eps,
                    normal_residual: r,
                    max_clever_covariate: max_h,
                    skipped: false,
                });
            }
        }
        target = planned;
    }
    steps.reverse();
    Ok(LtmleFit {
        theta: mean(&target),
        steps,
    })
}

/// Iterative G-computation: regress backwards from `Y_{T+1}`, evaluating
/// each fitted regression with the treatment history set to `plan`.
pub fn iterative_gcomp(data: &Dataset, plan: &[u8], spec: &RegressorSpec) -> Result<f64> {
    Ok(sequential(data, plan, spec, None)?.theta)
}

/// Sequentially targeted G-computation. `propensities[i][k]` is
/// `P(A_{k+1} = 1 | history)` for patient `i`; clipped internally.
pub fn ltmle_glm(data: &Dataset, plan: &[u8], spec: &RegressorSpec, propensities: &[Vec<f64>]) -> Result<LtmleFit> {
    if propensities.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::Contract("non-finite propensity".into()));
    }
    sequential(data, plan, spec, Some(propensities))
}

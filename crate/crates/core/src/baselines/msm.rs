use serde::{Deserialize, Serialize};

use super::features::{at_step, fit_propensities, prob_of};
use super::regress::{fit_logistic, fit_weighted_ridge};
use crate::datagen::Dataset;
use crate::error::{Error, Result};

/// Marginal structural model settings. Supplying `numerator` or
/// `denominator` (`[patient][k]`, `P(A_{k+1} = 1 | ·)`) replaces the
/// corresponding fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsmOptions {
    pub lambda: f64,
    pub numerator: Option<Vec<Vec<f64>>>,
    pub denominator: Option<Vec<Vec<f64>>>,
}

impl Default for MsmOptions {
    fn default() -> Self {
        MsmOptions {
            lambda: 1e-3,
            numerator: None,
            denominator: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsmFit {
    pub psi: f64,
    pub intercept: f64,
    /// `β_1..β_T`.
    pub coefficients: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Treatment-history-only propensities `P(A_{k+1} = 1 | A_1..A_k)`.
fn fit_numerator(data: &Dataset, lambda: f64) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::with_capacity(data.horizon); data.len()];
    for k in 0..data.horizon {
        let x: Vec<Vec<f64>> = data
            .trajectories
            .iter()
            .map(|tr| tr.a[..k].iter().map(|&v| f64::from(v)).collect())
            .collect();
        let y: Vec<f64> = data.trajectories.iter().map(|tr| f64::from(tr.a[k])).collect();
        let fit = fit_logistic(&x, &y, lambda).map_err(|e| at_step(e, k + 1))?;
        for (row, feats) in out.iter_mut().zip(&x) {
            row.push(fit.predict(feats));
        }
    }
    Ok(out)
}

/// Stabilised weights `SW_i = ∏_t f(A_t | Ā_{t-1}) / g(A_t | history)`.
pub fn stabilized_weights(data: &Dataset, opts: &MsmOptions) -> Result<Vec<f64>> {
    let numerator = match &opts.numerator {
        Some(n) => n.clone(),
        None => fit_numerator(data, opts.lambda)?,
    };
    let denominator = match &opts.denominator {
        Some(d) => d.clone(),
        None => fit_propensities(data, opts.lambda)?,
    };
    for m in [&numerator, &denominator] {
        if m.len() != data.len() || m.iter().any(|r| r.len() != data.horizon) {
            return Err(Error::Contract("propensity matrix does not match the dataset".into()));
        }
    }
    Ok(data
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, tr)| {
            (0..data.horizon)
                .map(|k| prob_of(numerator[i][k], tr.a[k]) / prob_of(denominator[i][k], tr.a[k]))
                .product()
        })
        .collect())
}

/// Weighted regression `Y_{T+1} ~ β_0 + Σ β_t A_t`; the effect is
/// `Σ β_t (a_t − b_t)`.
pub fn msm_ipw(data: &Dataset, treated: &[u8], control: &[u8], opts: &MsmOptions) -> Result<MsmFit> {
    let t = data.horizon;
    if treated.len() != t || control.len() != t {
        return Err(Error::Contract(format!("plans must have length {t}")));
    }
    let weights = stabilized_weights(data, opts)?;
    let total: f64 = weights.iter().sum();
    let max = weights.iter().fold(0.0f64, |m, w| m.max(*w));
    if !total.is_finite() || max <= 1e-12 {
        let min = weights.iter().fold(f64::INFINITY, |m, w| m.min(*w));
        return Err(Error::DegenerateWeights(format!(
            "n={}, min={min:e}, max={max:e}, sum={total:e}",
            weights.len()
        )));
    }
    let x: Vec<Vec<f64>> = data
        .trajectories
        .iter()
        .map(|tr| tr.a.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let fit =
        fit_weighted_ridge(&x, &data.final_outcomes(), Some(&weights), opts.lambda).map_err(|e| at_step(e, t + 1))?;
    let psi = fit
        .coefficients
        .iter()
        .zip(treated.iter().zip(control))
        .map(|(b, (&a, &c))| b * (f64::from(a) - f64::from(c)))
        .sum();
    Ok(MsmFit {
        psi,
        intercept: fit.intercept,
        coefficients: fit.coefficients,
        weights,
    })
}

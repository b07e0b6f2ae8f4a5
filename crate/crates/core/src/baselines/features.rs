use crate::datagen::{Dataset, Trajectory};
use crate::deepace::{PROPENSITY_CEIL, PROPENSITY_FLOOR};
use crate::error::Result;

use super::regress::fit_logistic;

pub(crate) fn clip(g: f64) -> f64 {
    g.clamp(PROPENSITY_FLOOR, PROPENSITY_CEIL)
}

/// Probability of treatment value `a` under `P(A = 1) = g`, clipped.
pub(crate) fn prob_of(g: f64, a: u8) -> f64 {
    let g = clip(g);
    if a == 1 {
        g
    } else {
        1.0 - g
    }
}

/// Flattened history through 0-based step `k`: covariates `X_1..X_{k+1}`
/// (optional), lagged outcomes `Y_2..Y_{k+1}` and treatments
/// `a[0..=k]`. `y[j]` holds `Y_{j+2}`.
pub(crate) fn history(x: &[Vec<f64>], y: &[f64], a: &[u8], k: usize, covariates: bool) -> Vec<f64> {
    let mut f = Vec::with_capacity((k + 1) * (x[0].len() + 2));
    if covariates {
        for row in &x[..=k] {
            f.extend_from_slice(row);
        }
    }
    f.extend_from_slice(&y[..k]);
    f.extend(a[..=k].iter().map(|&v| f64::from(v)));
    f
}

pub(crate) fn outcome_features(tr: &Trajectory, k: usize, treatments: &[u8], covariates: bool) -> Vec<f64> {
    history(&tr.x, &tr.y, treatments, k, covariates)
}

/// Features for the propensity of `A_{k+1}`: covariates through `k`,
/// lagged outcomes through `Y_{k+1}` and treatments before step `k + 1`.
pub(crate) fn propensity_features(tr: &Trajectory, k: usize) -> Vec<f64> {
    let mut f = Vec::with_capacity((k + 1) * (tr.x[0].len() + 2));
    for row in &tr.x[..=k] {
        f.extend_from_slice(row);
    }
    f.extend_from_slice(&tr.y[..k]);
    f.extend(tr.a[..k].iter().map(|&v| f64::from(v)));
    f
}

/// Per-step logistic propensities `P(A_{k+1} = 1 | history)`, indexed
/// `[patient][k]`, unclipped.
pub fn fit_propensities(data: &Dataset, lambda: f64) -> Result<Vec<Vec<f64>>> {
    let n = data.len();
    let mut out = vec![Vec::with_capacity(data.horizon); n];
    for k in 0..data.horizon {
        let x: Vec<Vec<f64>> = data.trajectories.iter().map(|tr| propensity_features(tr, k)).collect();
        let y: Vec<f64> = data.trajectories.iter().map(|tr| f64::from(tr.a[k])).collect();
        let fit = fit_logistic(&x, &y, lambda).map_err(|e| at_step(e, k + 1))?;
        for (row, feats) in out.iter_mut().zip(&x) {
            row.push(fit.predict(feats));
        }
    }
    Ok(out)
}

/// Attaches the 1-based time index to a step-agnostic solver error.
pub(crate) fn at_step(err: crate::Error, step: usize) -> crate::Error {
    match err {
        crate::Error::Singular { .. } => crate::Error::Singular { step },
        other => other,
    }
}

/// Sum with Neumaier compensation.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

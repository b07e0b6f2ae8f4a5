use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorKind {
    RidgeLinear,
    Logistic,
}

/// A fitted linear or logistic model `f(x) = link(intercept + coef·x)`.
/// The intercept is never penalised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub kind: RegressorKind,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
}

impl Regressor {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.coefficients.len());
        self.intercept + self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Mean for ridge, `P(y = 1)` for logistic.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let z = self.linear_predictor(x);
        match self.kind {
            RegressorKind::RidgeLinear => z,
            RegressorKind::Logistic => sigmoid(z),
        }
    }
}

fn check_inputs(x: &[Vec<f64>], y: &[f64], w: Option<&[f64]>) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() || w.is_some_and(|w| w.len() != y.len()) {
        return Err(Error::Contract(format!(
            "regression needs matching non-empty inputs ({} rows, {} targets)",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Contract("ragged feature matrix".into()));
    }
    Ok(d)
}

/// Ridge regression minimising `mean((y - b0 - x·b)^2) + λ‖b‖²`.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Regressor> {
    fit_weighted_ridge(x, y, None, lambda)
}

/// Weighted ridge: squared errors weighted by `w`, normalised by `Σw`.
pub fn fit_weighted_ridge(x: &[Vec<f64>], y: &[f64], w: Option<&[f64]>, lambda: f64) -> Result<Regressor> {
    let d = check_inputs(x, y, w)?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Config(format!(
            "ridge penalty must be non-negative, got {lambda}"
        )));
    }
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    let total: f64 = (0..y.len()).map(weight).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateWeights(format!("weights sum to {total}")));
    }
    let mut x_mean = vec![0.0; d];
    let mut y_mean = 0.0;
    for (i, row) in x.iter().enumerate() {
        let wi = weight(i);
        y_mean += wi * y[i];
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += wi * v;
        }
    }
    y_mean /= total;
    x_mean.iter_mut().for_each(|m| *m /= total);

    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut centred = vec![0.0; d];
    for (i, row) in x.iter().enumerate() {
        let wi = weight(i) / total;
        for j in 0..d {
            centred[j] = row[j] - x_mean[j];
        }
        let r = y[i] - y_mean;
        for j in 0..d {
            let cj = wi * centred[j];
            rhs[j] += cj * r;
            for l in j..d {
                gram[(j, l)] += cj * centred[l];
            }
        }
    }
    for j in 0..d {
        gram[(j, j)] += lambda;
        for l in 0..j {
            gram[(j, l)] = gram[(l, j)];
        }
    }
    let coefficients: Vec<f64> = if d == 0 {
        Vec::new()
    } else {
        let chol = gram.cholesky().ok_or(Error::Singular { step: 0 })?;
        chol.solve(&rhs).iter().copied().collect()
    };
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Singular { step: 0 });
    }
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    Ok(Regressor {
        kind: RegressorKind::RidgeLinear,
        intercept,
        coefficients,
        lambda,
    })
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-8;

/// L2-penalised logistic regression minimising
/// `mean(BCE) + (λ/2)‖b‖²` by damped Newton steps until the gradient norm is
/// below `1e-8`. When every label is identical the model is the constant
/// `(Σy + 1/2) / (n + 1)`.
pub fn fit_logistic(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Regressor> {
    let d = check_inputs(x, y, None)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Contract("logistic labels must be 0 or 1".into()));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Config(format!(
            "logistic penalty must be non-negative, got {lambda}"
        )));
    }
    let n = y.len() as f64;
    let positives: f64 = y.iter().sum();
    if positives == 0.0 || positives == n {
        let p = (positives + 0.5) / (n + 1.0);
        return Ok(Regressor {
            kind: RegressorKind::Logistic,
            intercept: (p / (1.0 - p)).ln(),
            coefficients: vec![0.0; d],
            lambda,
        });
    }
    // Parameter vector: [intercept, coefficients...].
    let m = d + 1;
    let mut beta = DVector::<f64>::zeros(m);
    beta[0] = (positives / (n - positives)).ln();
    let objective = |beta: &DVector<f64>| -> f64 {
        let mut loss = 0.0;
        for (row, &yi) in x.iter().zip(y) {
            let z = beta[0] + row.iter().enumerate().map(|(j, v)| beta[j + 1] * v).sum::<f64>();
            // log(1 + e^z) - y z, computed stably.
            loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - yi * z;
        }
        loss / n + 0.5 * lambda * beta.rows(1, d).norm_squared()
    };
    let mut grad_norm = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let mut grad = DVector::<f64>::zeros(m);
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for (row, &yi) in x.iter().zip(y) {
            let z = beta[0] + row.iter().enumerate().map(|(j, v)| beta[j + 1] * v).sum::<f64>();
            let p = sigmoid(z);
            let s = p * (1.0 - p);
            let r = p - yi;
            grad[0] += r;
            hess[(0, 0)] += s;
            for j in 0..d {
                grad[j + 1] += r * row[j];
                hess[(0, j + 1)] += s * row[j];
                for l in j..d {
                    hess[(j + 1, l + 1)] += s * row[j] * row[l];
                }
            }
        }
        grad /= n;
        hess /= n;
        for j in 1..m {
            grad[j] += lambda * beta[j];
            hess[(j, j)] += lambda;
        }
        for j in 0..m {
            for l in 0..j {
                hess[(j, l)] = hess[(l, j)];
            }
        }
        grad_norm = grad.norm();
        if grad_norm < NEWTON_TOL {
            return Ok(Regressor {
                kind: RegressorKind::Logistic,
                intercept: beta[0],
                coefficients: beta.rows(1, d).iter().copied().collect(),
                lambda,
            });
        }
        // A tiny ridge keeps the system solvable for unpenalised or
        // perfectly separable directions.
        for j in 0..m {
            hess[(j, j)] += 1e-12;
        }
        let step = hess.cholesky().ok_or(Error::Singular { step: 0 })?.solve(&grad);
        let current = objective(&beta);
        let mut scale = 1.0;
        loop {
            let candidate = &beta - scale * &step;
            if objective(&candidate) <= current || scale < 1e-10 {
                beta = candidate;
                break;
            }
            scale *= 0.5;
        }
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        grad_norm,
    })
}

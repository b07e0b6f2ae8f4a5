use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::{at_step, history};
use super::regress::{fit_ridge, Regressor};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Smallest residual variance used by the Gaussian models.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GFormulaOptions {
    /// Simulated paths per observed patient.
    pub n_mc: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Forces every residual variance to zero (deterministic rollouts).
    pub zero_variance: bool,
}

impl Default for GFormulaOptions {
    fn default() -> Self {
        GFormulaOptions {
            n_mc: 10,
            lambda: 1e-3,
            seed: 0,
            zero_variance: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GFormulaFit {
    pub theta: f64,
    /// Monte Carlo standard error from within-patient path variation.
    pub mc_standard_error: f64,
    pub diagnostics: Vec<String>,
}

struct Gaussian {
    mean: Regressor,
    sd: f64,
}

fn fit_gaussian(
    x: &[Vec<f64>],
    y: &[f64],
    opts: &GFormulaOptions,
    label: &str,
    step: usize,
    diag: &mut Vec<String>,
) -> Result<Gaussian> {
    let mean = fit_ridge(x, y, opts.lambda).map_err(|e| at_step(e, step))?;
    let var = if opts.zero_variance {
        0.0
    } else {
        let v = x.iter().zip(y).map(|(f, t)| (t - mean.predict(f)).powi(2)).sum::<f64>() / y.len() as f64;
        if v <= 0.0 {
            diag.push(format!(
                "{label}: residual variance {v:e} floored at {VARIANCE_FLOOR:e}"
            ));
            VARIANCE_FLOOR
        } else {
            v
        }
    };
    Ok(Gaussian { mean, sd: var.sqrt() })
}

/// Monte Carlo G-formula over per-coordinate linear-Gaussian covariate
/// models and linear outcome models, with the treatments set to `plan`.
pub fn parametric_gformula(data: &Dataset, plan: &[u8], opts: &GFormulaOptions) -> Result<GFormulaFit> {
    let (t, p) = (data.horizon, data.p);
    if plan.len() != t {
        return Err(Error::Contract(format!("plan must have length {t}")));
    }
    if opts.n_mc == 0 {
        return Err(Error::Config("n_mc must be at least 1".into()));
    }
    let trs = &data.trajectories;
    let mut diagnostics = Vec::new();

    // covariates[k - 1][j]: model of X_{k+1, j} given history through k - 1.
    let mut covariates: Vec<Vec<Gaussian>> = Vec::with_capacity(t.saturating_sub(1));
    for k in 1..t {
        let x: Vec<Vec<f64>> = trs.iter().map(|tr| history(&tr.x, &tr.y, &tr.a, k - 1, true)).collect();
        let mut per_coord = Vec::with_capacity(p);
        for j in 0..p {
            let y: Vec<f64> = trs.iter().map(|tr| tr.x[k][j]).collect();
            per_coord.push(fit_gaussian(
                &x,
                &y,
                opts,
                &format!("X_{} coordinate {}", k + 1, j + 1),
                k + 1,
                &mut diagnostics,
            )?);
        }
        covariates.push(per_coord);
    }
    // outcomes[k]: model of Y_{k+2} given history through k.
    let mut outcomes = Vec::with_capacity(t);
    for k in 0..t {
        let x: Vec<Vec<f64>> = trs.iter().map(|tr| history(&tr.x, &tr.y, &tr.a, k, true)).collect();
        let y: Vec<f64> = trs.iter().map(|tr| tr.y[k]).collect();
        outcomes.push(fit_gaussian(
            &x,
            &y,
            opts,
            &format!("Y_{}", k + 2),
            k + 2,
            &mut diagnostics,
        )?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "gformula"));
    let mut draw = |sd: f64| -> f64 {
        if sd == 0.0 {
            0.0
        } else {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        }
    };
    let n_mc = opts.n_mc as f64;
    let mut patient_means = Vec::with_capacity(trs.len());
    let mut within_var = 0.0;
    for tr in trs {
        let mut finals = Vec::with_capacity(opts.n_mc);
        for _ in 0..opts.n_mc {
            let mut x = vec![tr.x[0].clone()];
            let mut y = Vec::with_capacity(t);
            for k in 0..t {
                if k > 0 {
                    let feats = history(&x, &y, plan, k - 1, true);
                    let row = covariates[k - 1]
                        .iter()
                        .map(|m| m.mean.predict(&feats) + draw(m.sd))
                        .collect();
                    x.push(row);
                }
                let feats = history(&x, &y, plan, k, true);
                let mean = outcomes[k].mean.predict(&feats);
                if k + 1 == t {
                    finals.push(mean);
                } else {
                    y.push(mean + draw(outcomes[k].sd));
                }
            }
        }
        let m = finals.iter().sum::<f64>() / n_mc;
        if opts.n_mc > 1 {
            within_var += finals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n_mc - 1.0);
        }
        patient_means.push(m);
    }
    let n = trs.len() as f64;
    let theta = patient_means.iter().sum::<f64>() / n;
    if !theta.is_finite() {
        return Err(Error::Contract(
            "g-formula rollout produced a non-finite estimate".into(),
        ));
    }
    Ok(GFormulaFit {
        theta,
        mc_standard_error: (within_var / n_mc).sqrt() / n,
        diagnostics,
    })
}

//! The structural equations shared by data generation and the oracle.
//!
//! Generation and counterfactual re-simulation run through the same
//! [`simulate`] function, so forcing the factual treatments reproduces the
//! factual outcomes bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use super::types::{
    lagged, mean, Dataset, DgpConfig, DgpKind, DgpWeights, NoiseBundle, NoiseRecord, Trajectory, TreatmentMode,
};
use crate::autodiff::sigmoid;
use crate::error::{Error, Result};

/// Margin kept between the `tan` argument and its poles.
pub const TAN_MARGIN: f64 = 0.05;

fn clamp_tan_arg(v: f64) -> f64 {
    let lim = std::f64::consts::FRAC_PI_2 - TAN_MARGIN;
    v.clamp(-lim, lim)
}

pub(crate) fn sample_weights(config: &DgpConfig, rng: &mut ChaCha8Rng) -> DgpWeights {
    let h = config.lag;
    let mut alpha = Vec::with_capacity(h);
    let mut beta = Vec::with_capacity(h);
    let mut gamma = Vec::with_capacity(h);
    for i in 1..=h {
        let centre = 1.0 / (i as f64 + 1.0);
        let dist = Normal::new(centre, 0.02).expect("valid normal");
        alpha.push(dist.sample(rng));
        beta.push(dist.sample(rng));
        gamma.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
    }
    let sign = |i: usize| if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut w: Vec<f64> = (1..=h).map(|i| -sign(i) / i as f64).collect();
    let c = (1..=h).map(|i| sign(i) / (1.0 + i as f64)).collect();
    if config.sever_treatment {
        beta.iter_mut().for_each(|b| *b = 0.0);
        w.iter_mut().for_each(|v| *v = 0.0);
    }
    DgpWeights {
        alpha,
        beta,
        gamma,
        w,
        c,
    }
}

fn sample_noise(config: &DgpConfig, rng: &mut ChaCha8Rng) -> NoiseRecord {
    let mut draw = |scale: f64| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    };
    let mut eps_x = Vec::with_capacity(config.horizon);
    let mut eps_a = Vec::with_capacity(config.horizon);
    let mut eps_y = Vec::with_capacity(config.horizon);
    for _ in 0..config.horizon {
        eps_x.push((0..config.p).map(|_| draw(config.noise_x)).collect());
        eps_a.push(draw(config.noise_a));
        eps_y.push(draw(config.noise_y));
    }
    NoiseRecord { eps_x, eps_a, eps_y }
}

/// Semi-synthetic treatment level before the first step.
pub fn initial_treatment_level(horizon: usize) -> f64 {
    horizon as f64 / 2.0
}

/// One step of the semi-synthetic treatment-level recursion.
pub fn next_treatment_level(prev: f64, treated: u8, xbar: f64, lagged_y: f64) -> f64 {
    prev + 2.0 * (f64::from(treated) - 1.0) * xbar * lagged_y.tanh()
}

/// Per-patient stream; stream 0 draws the dataset weights.
fn patient_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Covariates at step `t` (1-based) from the lagged history.
fn covariates(config: &DgpConfig, wts: &DgpWeights, x: &[Vec<f64>], a: &[u8], eps: &[f64], t: usize) -> Vec<f64> {
    let mut z = eps.to_vec();
    for i in 1..=config.lag.min(t - 1) {
        let s = t - i;
        let treat = wts.beta[i - 1] * wts.gamma[i - 1] * (2.0 * f64::from(a[s - 1]) - 1.0);
        for (zj, xj) in z.iter_mut().zip(&x[s - 1]) {
            *zj += wts.alpha[i - 1] * xj + treat;
        }
    }
    if !config.linear {
        z.iter_mut().for_each(|v| *v = v.tanh());
    }
    z
}

/// Noise-free treatment logit at step `t`; `ell_prev` is the semi-synthetic
/// treatment level `ℓ_{t-1}`.
fn treatment_logit(config: &DgpConfig, wts: &DgpWeights, xbar: &[f64], y: &[f64], ell_prev: f64, t: usize) -> f64 {
    match config.kind {
        DgpKind::Synthetic => {
            // Lags before the first step count as X̄ = 0, which zeroes the product.
            let prod = if t > config.lag {
                (1..=config.lag).map(|i| xbar[t - i - 1]).product::<f64>()
            } else {
                0.0
            };
            let confounding = if config.linear { prod } else { clamp_tan_arg(prod).tan() };
            confounding + lagged(y, t) / config.p as f64
        }
        DgpKind::SemiSynthetic => {
            let mut s = 0.0;
            for i in 1..=config.lag.min(t - 1) {
                let src = t - i;
                s += wts.c[i - 1] * (xbar[src - 1] + lagged(y, src).tanh());
            }
            s - (ell_prev - config.horizon as f64 / 2.0).tanh()
        }
    }
}

fn outcome_mean(config: &DgpConfig, wts: &DgpWeights, xbar: &[f64], a: &[u8], t: usize) -> f64 {
    match config.kind {
        DgpKind::Synthetic => {
            let mut v = xbar[t - 1];
            for i in 1..=config.lag.min(t) {
                v += wts.w[i - 1] * (2.0 * f64::from(a[t - i]) - 1.0);
            }
            v
        }
        DgpKind::SemiSynthetic => {
            let mut v = 0.0;
            for i in 1..=config.lag.min(t - 1) {
                let s = t - i;
                let u = xbar[s - 1] * f64::from(a[s - 1]);
                v += wts.c[i - 1] * (u.sin() + u.cos()).tanh();
            }
            5.0 * v
        }
    }
}

/// Runs the structural equations for one patient. With `forced` set, the
/// treatment equation is bypassed and `forced[t-1]` is used instead.
pub(crate) fn simulate(
    config: &DgpConfig,
    wts: &DgpWeights,
    noise: &NoiseRecord,
    forced: Option<&[u8]>,
    id: usize,
) -> Trajectory {
    let horizon = config.horizon;
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    let mut xbar = Vec::with_capacity(horizon);
    let mut a: Vec<u8> = Vec::with_capacity(horizon);
    let mut y = Vec::with_capacity(horizon);
    let mut ell = initial_treatment_level(horizon);
    for t in 1..=horizon {
        let xt = covariates(config, wts, &x, &a, &noise.eps_x[t - 1], t);
        xbar.push(mean(&xt));
        x.push(xt);

        let at = match forced {
            Some(plan) => plan[t - 1],
            None => match config.treatment {
                TreatmentMode::Randomized => u8::from(noise.eps_a[t - 1] > 0.0),
                TreatmentMode::Confounded => {
                    let logit = treatment_logit(config, wts, &xbar, &y, ell, t);
                    u8::from(sigmoid(logit + noise.eps_a[t - 1]) > 0.5)
                }
            },
        };
        a.push(at);
        if config.kind == DgpKind::SemiSynthetic {
            ell = next_treatment_level(ell, at, xbar[t - 1], lagged(&y, t));
        }
        y.push(outcome_mean(config, wts, &xbar, &a, t) + noise.eps_y[t - 1]);
    }
    Trajectory { id, x, a, y }
}

/// Draws a full dataset (with noise records) for `config`.
pub fn generate(config: &DgpConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weights = sample_weights(config, &mut rng);
    let (trajectories, records): (Vec<_>, Vec<_>) = (0..config.n)
        .into_par_iter()
        .map(|i| {
            let noise = sample_noise(config, &mut patient_rng(config.seed, i));
            let tr = simulate(config, &weights, &noise, None, i);
            (tr, noise)
        })
        .unzip();
    let bundle = NoiseBundle {
        config: config.clone(),
        weights,
        records,
    };
    Dataset::new(trajectories, Some(bundle))
}

/// Synthetic generator: `X_t` autoregressive through `tanh`, `A_t` thresholded
/// from a `tan`-confounded propensity, `Y_{t+1}` linear in `X̄_t` and lagged
/// treatments.
pub fn gen_synthetic(config: &DgpConfig) -> Result<Dataset> {
    if config.kind != DgpKind::Synthetic {
        return Err(Error::Config("gen_synthetic needs kind = synthetic".into()));
    }
    generate(config)
}

/// Semi-synthetic generator: same covariate process, treatment assignment
/// driven by the running treatment level `ℓ_t`.
pub fn gen_semisynthetic(config: &DgpConfig) -> Result<Dataset> {
    if config.kind != DgpKind::SemiSynthetic {
        return Err(Error::Config("gen_semisynthetic needs kind = semi-synthetic".into()));
    }
    generate(config)
}

fn bundle(dataset: &Dataset) -> Result<&NoiseBundle> {
    dataset
        .noise
        .as_ref()
        .ok_or_else(|| Error::MissingNoise("dataset was not produced by a simulator or its sidecar is missing".into()))
}

/// Re-simulates every patient with treatments forced to `plan`.
pub fn counterfactual_outcomes(dataset: &Dataset, plan: &[u8]) -> Result<Vec<f64>> {
    let nb = bundle(dataset)?;
    if plan.len() != nb.config.horizon {
        return Err(Error::Contract(format!(
            "plan has length {}, horizon is {}",
            plan.len(),
            nb.config.horizon
        )));
    }
    Ok(nb
        .records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| simulate(&nb.config, &nb.weights, rec, Some(plan), i).final_outcome())
        .collect())
}

/// Re-simulated factual trajectories (treatments forced to the observed ones).
pub fn resimulate_factual(dataset: &Dataset) -> Result<Vec<Trajectory>> {
    let nb = bundle(dataset)?;
    Ok(dataset
        .trajectories
        .iter()
        .zip(&nb.records)
        .map(|(tr, rec)| simulate(&nb.config, &nb.weights, rec, Some(&tr.a), tr.id))
        .collect())
}

/// `θ^a = mean_i Y_{T+1}^{(i)}(ā)` on the recorded noise.
pub fn ground_truth_theta(dataset: &Dataset, plan: &[u8]) -> Result<f64> {
    let ys = counterfactual_outcomes(dataset, plan)?;
    Ok(ys.iter().sum::<f64>() / ys.len() as f64)
}

/// Paired oracle ACE: `mean_i [Y_{T+1}^{(i)}(ā) - Y_{T+1}^{(i)}(b̄)]` with
/// shared noise and weights.
pub fn ground_truth_ace(dataset: &Dataset, treated: &[u8], control: &[u8]) -> Result<f64> {
    let ya = counterfactual_outcomes(dataset, treated)?;
    let yb = counterfactual_outcomes(dataset, control)?;
    let total: f64 = ya.iter().zip(&yb).map(|(a, b)| a - b).sum();
    Ok(total / ya.len() as f64)
}

/// True propensities `P(A_t = 1 | H_t)` of the observed histories, `N x T`.
pub fn oracle_propensities(dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

    let nb = bundle(dataset)?;
    let config = &nb.config;
    let std_normal = StatNormal::standard();
    Ok(dataset
        .trajectories
        .iter()
        .map(|tr| {
            let xbar: Vec<f64> = tr.x.iter().map(|r| mean(r)).collect();
            let mut ell = config.horizon as f64 / 2.0;
            (1..=config.horizon)
                .map(|t| {
                    let prob = match config.treatment {
                        TreatmentMode::Randomized => 0.5,
                        TreatmentMode::Confounded => {
                            let logit = treatment_logit(config, &nb.weights, &xbar, &tr.y, ell, t);
                            if config.noise_a > 0.0 {
                                std_normal.cdf(logit / config.noise_a)
                            } else if sigmoid(logit) > 0.5 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    if config.kind == DgpKind::SemiSynthetic {
                        ell += 2.0 * (f64::from(tr.a[t - 1]) - 1.0) * xbar[t - 1] * tr.lagged_outcome(t).tanh();
                    }
                    prob
                })
                .collect()
        })
        .collect())
}

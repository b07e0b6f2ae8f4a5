use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::forward::{compute_eif, evaluate, forward, ForwardOptions, ForwardOutputs, LossParts};
use super::network::{Batch, Network, Standardizer};
use crate::autodiff::{make_dropout_plan, AdamState, DropoutPlan};
use crate::datagen::{Dataset, InterventionPlan};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// A trained arm: network parameters (including `ε`), the plan it targets
/// and the outcome scaling used during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub config: ModelConfig,
    pub network: Network,
    pub plan: InterventionPlan,
    pub standardizer: Standardizer,
    pub dataset_fingerprint: String,
    /// Mean training loss per epoch.
    pub history: Vec<LossParts>,
}

/// What the training loop exposes after each optimizer step, before the
/// update is applied.
pub struct StepReport<'a> {
    pub epoch: usize,
    /// 1-based count of optimizer steps.
    pub step: usize,
    pub loss: LossParts,
    pub epsilon_gradient: f64,
    pub outputs: &'a ForwardOutputs,
    pub beta: f64,
}

impl StepReport<'_> {
    /// Batch mean of the influence function at the batch mean of the first
    /// targeted output.
    pub fn mean_eif(&self) -> f64 {
        let phi = compute_eif(self.outputs, self.outputs.theta());
        phi.iter().sum::<f64>() / phi.len() as f64
    }

    /// `|∂L/∂ε − (β/T)·mean(φ)|`.
    pub fn identity_residual(&self) -> f64 {
        let t = self.outputs.horizon() as f64;
        (self.epsilon_gradient - self.beta / t * self.mean_eif()).abs()
    }
}

fn diverged(epoch: usize, step: usize, err: Error) -> Error {
    match err {
        Error::NonFinite { node, op } => Error::Diverged {
            epoch,
            step,
            detail: format!("non-finite value at node {node} ({op})"),
        },
        other => other,
    }
}

pub fn train(data: &Dataset, plan: &InterventionPlan, config: &ModelConfig) -> Result<FittedModel> {
    train_monitored(data, plan, config, |_| {})
}

/// Minibatch Adam on the joint loss. `monitor` sees every step.
pub fn train_monitored(
    data: &Dataset,
    plan: &InterventionPlan,
    config: &ModelConfig,
    mut monitor: impl FnMut(&StepReport),
) -> Result<FittedModel> {
    config.validate()?;
    if plan.len() != data.horizon {
        return Err(Error::Contract(format!(
            "plan length {} does not match horizon {}",
            plan.len(),
            data.horizon
        )));
    }
    let mut network = Network::init(data.p, data.horizon, config.hidden, derive_seed(config.seed, "init"))?;
    let standardizer = Standardizer::fit(data);
    let mut adam = AdamState::new(&network.params, config.learning_rate)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle"));
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut sum = LossParts::default();
        let mut batches = 0.0;
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let batch = Batch::new(data, chunk, plan.as_slice(), &standardizer)?;
            let dropout = if config.dropout > 0.0 {
                Some(make_dropout_plan(
                    chunk.len(),
                    network.layout.input_dim(),
                    config.hidden,
                    config.dropout,
                    derive_seed(config.seed, &format!("dropout/{step}")),
                )?)
            } else {
                None
            };
            let opts = ForwardOptions {
                dropout: dropout.as_ref(),
                ..ForwardOptions::default()
            };
            let eval =
                evaluate(&network, &batch, &opts, config.alpha, config.beta).map_err(|e| diverged(epoch, step, e))?;
            if !eval.loss.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: format!("loss {:?}", eval.loss),
                });
            }
            monitor(&StepReport {
                epoch,
                step,
                loss: eval.loss,
                epsilon_gradient: eval.epsilon_gradient(&network),
                outputs: &eval.outputs,
                beta: config.beta,
            });
            adam.step(&mut network.params, &eval.gradients)?;
            if network.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: "non-finite parameter after update".into(),
                });
            }
            sum.total += eval.loss.total;
            sum.outcome += eval.loss.outcome;
            sum.propensity += eval.loss.propensity;
            sum.targeting += eval.loss.targeting;
            batches += 1.0;
        }
        history.push(LossParts {
            total: sum.total / batches,
            outcome: sum.outcome / batches,
            propensity: sum.propensity / batches,
            targeting: sum.targeting / batches,
        });
    }
    Ok(FittedModel {
        config: config.clone(),
        network,
        plan: plan.clone(),
        standardizer,
        dataset_fingerprint: data.fingerprint(),
        history,
    })
}

impl FittedModel {
    /// Full-dataset forward pass on the standardized scale.
    pub fn predict(&self, data: &Dataset, dropout: Option<&DropoutPlan>) -> Result<ForwardOutputs> {
        self.network.check_compatible(data)?;
        let batch = Batch::full(data, self.plan.as_slice(), &self.standardizer)?;
        forward(
            &self.network,
            &batch,
            &ForwardOptions {
                dropout,
                ..ForwardOptions::default()
            },
        )
    }

    /// Mean squared error of the last factual head against `Y_{T+1}`, in
    /// outcome units.
    pub fn factual_mse(&self, data: &Dataset) -> Result<f64> {
        let out = self.predict(data, None)?;
        let t = out.horizon();
        let sq: f64 = out
            .q_factual
            .iter()
            .zip(data.trajectories.iter())
            .map(|(q, tr)| (self.standardizer.inverse(q[t - 1]) - tr.final_outcome()).powi(2))
            .sum();
        Ok(sq / data.len() as f64)
    }

    pub fn epsilon(&self) -> f64 {
        self.network.epsilon()
    }

    fn theta_from(&self, out: &ForwardOutputs) -> f64 {
        self.standardizer.inverse(out.theta())
    }
}

/// `θ̃^a`: mean first targeted output, dropout off, in outcome units.
pub fn estimate_theta(fitted: &FittedModel, data: &Dataset) -> Result<f64> {
    let out = fitted.predict(data, None)?;
    Ok(fitted.theta_from(&out))
}

/// Effect estimate from two arms fitted on the same data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AceEstimate {
    pub psi: f64,
    pub theta_a: f64,
    pub theta_b: f64,
    pub samples: Option<Vec<f64>>,
    pub seeds: (u64, u64),
    pub dataset_fingerprint: String,
    pub config_fingerprint: Option<String>,
}

fn check_fingerprint(fitted: &FittedModel, data: &Dataset, found: &str) -> Result<()> {
    if fitted.dataset_fingerprint != found {
        return Err(Error::FingerprintMismatch {
            expected: fitted.dataset_fingerprint.clone(),
            found: found.to_string(),
        });
    }
    fitted.network.check_compatible(data)
}

pub fn estimate_ace(fitted_a: &FittedModel, fitted_b: &FittedModel, data: &Dataset) -> Result<AceEstimate> {
    let found = data.fingerprint();
    check_fingerprint(fitted_a, data, &found)?;
    check_fingerprint(fitted_b, data, &found)?;
    let theta_a = estimate_theta(fitted_a, data)?;
    let theta_b = estimate_theta(fitted_b, data)?;
    Ok(AceEstimate {
        psi: theta_a - theta_b,
        theta_a,
        theta_b,
        samples: None,
        seeds: (fitted_a.config.seed, fitted_b.config.seed),
        dataset_fingerprint: found,
        config_fingerprint: data.config_fingerprint(),
    })
}

/// `k` effect samples, each from one forward pass per arm with freshly drawn
/// dropout masks at the arms' training rates.
pub fn mc_dropout_estimates(
    fitted_a: &FittedModel,
    fitted_b: &FittedModel,
    data: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Config("number of dropout samples must be at least 1".into()));
    }
    let arm = |fitted: &FittedModel, label: &str, j: usize| -> Result<f64> {
        let plan = make_dropout_plan(
            data.len(),
            fitted.network.layout.input_dim(),
            fitted.network.layout.hidden,
            fitted.config.dropout,
            derive_seed(seed, &format!("mc/{label}/{j}")),
        )?;
        let out = fitted.predict(data, Some(&plan))?;
        Ok(fitted.theta_from(&out))
    };
    (0..k)
        .map(|j| Ok(arm(fitted_a, "a", j)? - arm(fitted_b, "b", j)?))
        .collect()
}

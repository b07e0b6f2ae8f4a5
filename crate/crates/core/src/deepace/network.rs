use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{uniform_init, Tensor};
use crate::datagen::Dataset;
use crate::error::{Error, Result};

/// Parameter indices of one feed-forward head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSlots {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Positions of every tensor inside [`Network::params`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub covariates: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub lstm_input: usize,
    pub lstm_hidden: usize,
    pub lstm_bias: usize,
    pub outcome_heads: Vec<HeadSlots>,
    pub propensity_heads: Vec<HeadSlots>,
    pub epsilon: usize,
}

impl Layout {
    pub fn new(covariates: usize, horizon: usize, hidden: usize) -> Self {
        let mut next = 3;
        let mut head = || {
            let slots = HeadSlots {
                w1: next,
                b1: next + 1,
                w2: next + 2,
                b2: next + 3,
            };
            next += 4;
            slots
        };
        let outcome_heads = (0..horizon).map(|_| head()).collect();
        let propensity_heads = (0..horizon).map(|_| head()).collect();
        Layout {
            covariates,
            horizon,
            hidden,
            lstm_input: 0,
            lstm_hidden: 1,
            lstm_bias: 2,
            outcome_heads,
            propensity_heads,
            epsilon: 3 + 8 * horizon,
        }
    }

    /// Width of the per-step LSTM input: covariates, lagged outcome and
    /// previous treatment.
    pub fn input_dim(&self) -> usize {
        self.covariates + 2
    }

    pub fn param_count(&self) -> usize {
        self.epsilon + 1
    }
}

/// All trainable tensors of a DeepACE model, including the scalar
/// perturbation parameter `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layout: Layout,
    pub params: Vec<Tensor>,
}

impl Network {
    pub fn init(covariates: usize, horizon: usize, hidden: usize, seed: u64) -> Result<Self> {
        if covariates == 0 || horizon == 0 || hidden == 0 {
            return Err(Error::Config(format!(
                "network needs p, T and hidden >= 1 (got {covariates}, {horizon}, {hidden})"
            )));
        }
        let layout = Layout::new(covariates, horizon, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = hidden;
        let mut params = Vec::with_capacity(layout.param_count());
        params.push(uniform_init(layout.input_dim(), 4 * h, h, &mut rng));
        params.push(uniform_init(h, 4 * h, h, &mut rng));
        let mut bias = Tensor::zeros(1, 4 * h);
        bias.data_mut()[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        params.push(bias);
        for input in [h + 1, h] {
            for _ in 0..horizon {
                params.push(uniform_init(input, h, input, &mut rng));
                params.push(Tensor::zeros(1, h));
                params.push(uniform_init(h, 1, h, &mut rng));
                params.push(Tensor::zeros(1, 1));
            }
        }
        params.push(Tensor::scalar(0.0));
        debug_assert_eq!(params.len(), layout.param_count());
        Ok(Network { layout, params })
    }

    pub fn epsilon(&self) -> f64 {
        self.params[self.layout.epsilon].item()
    }

    pub fn set_epsilon(&mut self, value: f64) {
        self.params[self.layout.epsilon] = Tensor::scalar(value);
    }

    pub(crate) fn check_compatible(&self, data: &Dataset) -> Result<()> {
        if data.p != self.layout.covariates || data.horizon != self.layout.horizon {
            return Err(Error::Contract(format!(
                "network built for p={}, T={} but data has p={}, T={}",
                self.layout.covariates, self.layout.horizon, data.p, data.horizon
            )));
        }
        Ok(())
    }
}

/// Affine map taking raw outcomes to zero mean and unit variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer { mean: 0.0, scale: 1.0 }
    }

    /// Fitted on every recorded outcome `Y_2..Y_{T+1}` of `data`.
    pub fn fit(data: &Dataset) -> Self {
        let values: Vec<f64> = data.trajectories.iter().flat_map(|t| t.y.iter().copied()).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
        Standardizer { mean, scale }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.scale + self.mean
    }
}

/// Model-ready view of a set of trajectories under one intervention plan.
/// Every per-step matrix has one row per patient.
#[derive(Clone, Debug)]
pub struct Batch {
    pub size: usize,
    pub horizon: usize,
    /// `[k]`: LSTM input at step `k + 1` under the observed history.
    pub factual_inputs: Vec<Tensor>,
    /// `[k]`: LSTM input at step `k + 1` with past treatments replaced by the plan.
    pub counterfactual_inputs: Vec<Tensor>,
    /// `[k]`: observed treatment at step `k + 1`, one column.
    pub treatments: Vec<Tensor>,
    /// `[k]`: planned treatment at step `k + 1`, one column.
    pub planned: Vec<Tensor>,
    /// Standardized final outcome, one column.
    pub outcome: Tensor,
    pub observed: Vec<Vec<u8>>,
    pub plan: Vec<u8>,
}

impl Batch {
    pub fn new(data: &Dataset, indices: &[usize], plan: &[u8], std: &Standardizer) -> Result<Self> {
        let horizon = data.horizon;
        if plan.len() != horizon {
            return Err(Error::Contract(format!(
                "plan length {} does not match horizon {horizon}",
                plan.len()
            )));
        }
        if indices.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let p = data.p;
        let b = indices.len();
        let mut factual_inputs = Vec::with_capacity(horizon);
        let mut counterfactual_inputs = Vec::with_capacity(horizon);
        let mut treatments = Vec::with_capacity(horizon);
        let mut planned = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let mut fac = Vec::with_capacity(b * (p + 2));
            let mut cf = Vec::with_capacity(b * (p + 2));
            let mut trt = Vec::with_capacity(b);
            for &i in indices {
                let tr = &data.trajectories[i];
                let lag_y = if k == 0 { 0.0 } else { std.forward(tr.y[k - 1]) };
                let prev_a = if k == 0 { 0.0 } else { f64::from(tr.a[k - 1]) };
                let prev_plan = if k == 0 { 0.0 } else { f64::from(plan[k - 1]) };
                fac.extend_from_slice(&tr.x[k]);
                fac.push(lag_y);
                fac.push(prev_a);
                cf.extend_from_slice(&tr.x[k]);
                cf.push(lag_y);
                cf.push(prev_plan);
                trt.push(f64::from(tr.a[k]));
            }
            factual_inputs.push(Tensor::matrix(b, p + 2, fac)?);
            counterfactual_inputs.push(Tensor::matrix(b, p + 2, cf)?);
            treatments.push(Tensor::column(trt));
            planned.push(Tensor::full(b, 1, f64::from(plan[k])));
        }
        let outcome = Tensor::column(
            indices
                .iter()
                .map(|&i| std.forward(data.trajectories[i].final_outcome()))
                .collect(),
        );
        let observed = indices.iter().map(|&i| data.trajectories[i].a.clone()).collect();
        Ok(Batch {
            size: b,
            horizon,
            factual_inputs,
            counterfactual_inputs,
            treatments,
            planned,
            outcome,
            observed,
            plan: plan.to_vec(),
        })
    }

    pub fn full(data: &Dataset, plan: &[u8], std: &Standardizer) -> Result<Self> {
        let indices: Vec<usize> = (0..data.len()).collect();
        Self::new(data, &indices, plan, std)
    }
}

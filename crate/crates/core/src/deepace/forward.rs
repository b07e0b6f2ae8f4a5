use serde::{Deserialize, Serialize};

use super::network::{Batch, HeadSlots, Network};
use crate::autodiff::{lstm_cell, DropoutPlan, GradTape, LstmWeights, NodeId, ParamId, Tensor};
use crate::error::{Error, Result};

/// Lower clip applied to propensities inside inverse weights and the
/// cross-entropy.
pub const PROPENSITY_FLOOR: f64 = 0.01;
/// Upper clip, see [`PROPENSITY_FLOOR`].
pub const PROPENSITY_CEIL: f64 = 0.99;

fn clip(g: f64) -> f64 {
    g.clamp(PROPENSITY_FLOOR, PROPENSITY_CEIL)
}

/// How the counterfactual regression target enters the outcome loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TargetMode {
    /// Same graph node, gradient blocked.
    #[default]
    StopGradient,
    /// A detached copy of the value.
    Constant,
    /// Gradient flows into the target head as well.
    Live,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions<'a> {
    pub dropout: Option<&'a DropoutPlan>,
    pub target_mode: TargetMode,
}

/// Per-patient values of one forward pass, indexed `[patient][k]` where
/// `k = 0` is the first step. Outcome-model entries are on the standardized
/// scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardOutputs {
    pub plan: Vec<u8>,
    pub observed: Vec<Vec<u8>>,
    /// Final outcome `Y_{T+1}`.
    pub outcome: Vec<f64>,
    /// Head `k` under the observed treatment at step `k + 1`.
    pub q_factual: Vec<Vec<f64>>,
    /// Head `k` under the counterfactual history and planned treatment.
    pub q_counterfactual: Vec<Vec<f64>>,
    /// Unclipped `P(A_{k+1} = 1 | history)`.
    pub propensity: Vec<Vec<f64>>,
    /// `T + 1` perturbation values per patient; the last one is zero.
    pub perturbation: Vec<Vec<f64>>,
    /// `T + 1` targeted outputs per patient; the last one is the outcome.
    pub targeted: Vec<Vec<f64>>,
    pub epsilon: f64,
}

impl ForwardOutputs {
    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.plan.len()
    }

    /// Cumulative products `∏_{l<=k} 1(A_l = a_l) / g_l(a_l)` per patient,
    /// using clipped propensities of the planned treatment.
    pub fn inverse_weight_products(&self) -> Vec<Vec<f64>> {
        self.observed
            .iter()
            .zip(&self.propensity)
            .map(|(obs, g)| {
                let mut acc = 1.0;
                (0..self.horizon())
                    .map(|k| {
                        let gc = clip(g[k]);
                        let g_plan = if self.plan[k] == 1 { gc } else { 1.0 - gc };
                        let comply = if obs[k] == self.plan[k] { 1.0 } else { 0.0 };
                        acc *= comply * (1.0 / g_plan);
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    /// Mean of the first targeted output.
    pub fn theta(&self) -> f64 {
        self.targeted.iter().map(|q| q[0]).sum::<f64>() / self.len() as f64
    }
}

/// Components of the training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub outcome: f64,
    pub propensity: f64,
    pub targeting: f64,
}

/// Objective from already computed outputs:
/// `L = L_Q + alpha * L_g + beta * L_tar`, where the targeting term carries
/// a factor `1/2` so that its `ε`-derivative is the mean influence function
/// times `beta / T`.
pub fn loss(out: &ForwardOutputs, alpha: f64, beta: f64) -> Result<LossParts> {
    let n = out.len();
    let t = out.horizon();
    let norm = (n * t) as f64;
    let (mut lq, mut lg, mut lt) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let qf = &out.q_factual[i];
        let qc = &out.q_counterfactual[i];
        lq += (qf[t - 1] - out.outcome[i]).powi(2);
        for k in 0..t - 1 {
            lq += (qf[k] - qc[k + 1]).powi(2);
        }
        for k in 0..t {
            let g = clip(out.propensity[i][k]);
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::Contract(format!("propensity {g} outside (0, 1) after clipping")));
            }
            let a = f64::from(out.observed[i][k]);
            lg -= a * g.ln() + (1.0 - a) * (1.0 - g).ln();
            lt += (out.targeted[i][k + 1] - out.targeted[i][k]).powi(2);
        }
    }
    let (lq, lg, lt) = (lq / norm, lg / norm, lt / (2.0 * norm));
    Ok(LossParts {
        total: lq + alpha * lg + beta * lt,
        outcome: lq,
        propensity: lg,
        targeting: lt,
    })
}

/// Perturbation values from one patient's inverse-weight products:
/// `q[T] = 0` and `q[k] = q[k+1] - h[k]`.
pub fn perturbation_values(products: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; products.len() + 1];
    for k in (0..products.len()).rev() {
        q[k] = q[k + 1] - products[k];
    }
    q
}

/// Per-patient efficient influence function at `theta`.
pub fn compute_eif(out: &ForwardOutputs, theta: f64) -> Vec<f64> {
    let products = out.inverse_weight_products();
    out.targeted
        .iter()
        .zip(&products)
        .map(|(q, h)| {
            let mut phi = q[0] - theta;
            for k in 0..out.horizon() {
                phi += (q[k + 1] - q[k]) * h[k];
            }
            phi
        })
        .collect()
}

/// Node handles of a recorded forward and loss graph.
pub(crate) struct Graph {
    pub params: Vec<NodeId>,
    pub total: NodeId,
    pub outcome: NodeId,
    pub propensity: NodeId,
    pub targeting: NodeId,
    q_factual: Vec<NodeId>,
    q_counterfactual: Vec<NodeId>,
    propensity_raw: Vec<NodeId>,
    perturbation: Vec<NodeId>,
    targeted: Vec<NodeId>,
    epsilon: NodeId,
}

fn head(tape: &mut GradTape, params: &[NodeId], slots: HeadSlots, input: NodeId) -> Result<NodeId> {
    let z = tape.matmul(input, params[slots.w1])?;
    let z = tape.add_row(z, params[slots.b1])?;
    let z = tape.elu(z)?;
    let z = tape.matmul(z, params[slots.w2])?;
    tape.add_row(z, params[slots.b2])
}

fn sum_all(tape: &mut GradTape, terms: &[NodeId]) -> Result<NodeId> {
    let mut acc = tape.sum(terms[0])?;
    for &t in &terms[1..] {
        let s = tape.sum(t)?;
        acc = tape.add(acc, s)?;
    }
    Ok(acc)
}

pub(crate) fn record(
    tape: &mut GradTape,
    net: &Network,
    batch: &Batch,
    opts: &ForwardOptions,
    alpha: f64,
    beta: f64,
) -> Result<Graph> {
    let layout = &net.layout;
    let (b, t, h) = (batch.size, batch.horizon, layout.hidden);
    if t != layout.horizon {
        return Err(Error::Contract(format!(
            "batch horizon {t} but network horizon {}",
            layout.horizon
        )));
    }
    let params = net
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| tape.param(ParamId(i), p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let masks = match opts.dropout {
        Some(plan) => {
            let (im, rm) = (plan.input_mask(), plan.recurrent_mask());
            if im.rows() != b || im.cols() != layout.input_dim() || rm.rows() != b || rm.cols() != h {
                return Err(Error::Shape {
                    op: "dropout_plan",
                    detail: format!(
                        "masks {:?}/{:?} for batch {b}, input {}, hidden {h}",
                        im.shape(),
                        rm.shape(),
                        layout.input_dim()
                    ),
                });
            }
            Some(plan.record(tape)?)
        }
        None => None,
    };
    let weights = LstmWeights {
        w_input: params[layout.lstm_input],
        w_hidden: params[layout.lstm_hidden],
        bias: params[layout.lstm_bias],
        hidden: h,
    };

    let run = |tape: &mut GradTape, inputs: &[Tensor]| -> Result<Vec<NodeId>> {
        let mut hs = tape.constant(Tensor::zeros(b, h))?;
        let mut cs = tape.constant(Tensor::zeros(b, h))?;
        let mut out = Vec::with_capacity(t);
        for x in inputs {
            let x = tape.constant(x.clone())?;
            (hs, cs) = lstm_cell(tape, x, hs, cs, &weights, masks.as_ref())?;
            out.push(hs);
        }
        Ok(out)
    };
    let h_factual = run(tape, &batch.factual_inputs)?;
    let h_counter = run(tape, &batch.counterfactual_inputs)?;

    let mut q_factual = Vec::with_capacity(t);
    let mut q_counterfactual = Vec::with_capacity(t);
    let mut propensity_raw = Vec::with_capacity(t);
    let mut bce_terms = Vec::with_capacity(t);
    let mut products = Vec::with_capacity(t);
    for k in 0..t {
        let trt = tape.constant(batch.treatments[k].clone())?;
        let planned = tape.constant(batch.planned[k].clone())?;
        let inp_f = tape.concat_cols(&[h_factual[k], trt])?;
        let inp_c = tape.concat_cols(&[h_counter[k], planned])?;
        q_factual.push(head(tape, &params, layout.outcome_heads[k], inp_f)?);
        q_counterfactual.push(head(tape, &params, layout.outcome_heads[k], inp_c)?);

        let logit = head(tape, &params, layout.propensity_heads[k], h_factual[k])?;
        let g = tape.sigmoid(logit)?;
        propensity_raw.push(g);
        let gc = tape.clamp(g, PROPENSITY_FLOOR, PROPENSITY_CEIL)?;
        let gc_not = tape.affine(gc, -1.0, 1.0)?;

        let ln_g = tape.ln(gc)?;
        let ln_not = tape.ln(gc_not)?;
        let untreated = tape.constant(batch.treatments[k].map(|a| 1.0 - a))?;
        let pos = tape.mul(trt, ln_g)?;
        let neg = tape.mul(untreated, ln_not)?;
        bce_terms.push(tape.add(pos, neg)?);

        let g_plan = if batch.plan[k] == 1 { gc } else { gc_not };
        let comply = Tensor::column(
            batch
                .observed
                .iter()
                .map(|obs| if obs[k] == batch.plan[k] { 1.0 } else { 0.0 })
                .collect(),
        );
        let comply = tape.constant(comply)?;
        let inv = tape.recip(g_plan)?;
        let w = tape.mul(comply, inv)?;
        let prod = match products.last() {
            Some(&prev) => tape.mul(prev, w)?,
            None => w,
        };
        products.push(prod);
    }

    let mut perturbation = vec![tape.constant(Tensor::zeros(b, 1))?; t + 1];
    for k in (0..t).rev() {
        perturbation[k] = tape.sub(perturbation[k + 1], products[k])?;
    }
    let epsilon = params[layout.epsilon];
    let mut targeted = Vec::with_capacity(t + 1);
    for k in 0..t {
        let shift = tape.scale_by(perturbation[k], epsilon)?;
        targeted.push(tape.add(q_counterfactual[k], shift)?);
    }
    let outcome_node = tape.constant(batch.outcome.clone())?;
    targeted.push(outcome_node);

    let norm = (b * t) as f64;
    let mut q_terms = Vec::with_capacity(t);
    let last = tape.sub(q_factual[t - 1], outcome_node)?;
    q_terms.push(tape.square(last)?);
    for k in 0..t - 1 {
        let target = match opts.target_mode {
            TargetMode::StopGradient => tape.stop_gradient(q_counterfactual[k + 1])?,
            TargetMode::Constant => {
                let v = tape.value(q_counterfactual[k + 1]).clone();
                tape.constant(v)?
            }
            TargetMode::Live => q_counterfactual[k + 1],
        };
        let d = tape.sub(q_factual[k], target)?;
        q_terms.push(tape.square(d)?);
    }
    let lq = sum_all(tape, &q_terms)?;
    let lq = tape.scale(lq, 1.0 / norm)?;

    let lg = sum_all(tape, &bce_terms)?;
    let lg = tape.scale(lg, -1.0 / norm)?;

    let mut tar_terms = Vec::with_capacity(t);
    for k in 0..t {
        let d = tape.sub(targeted[k + 1], targeted[k])?;
        tar_terms.push(tape.square(d)?);
    }
    let lt = sum_all(tape, &tar_terms)?;
    let lt = tape.scale(lt, 0.5 / norm)?;

    let wg = tape.scale(lg, alpha)?;
    let wt = tape.scale(lt, beta)?;
    let total = tape.add(lq, wg)?;
    let total = tape.add(total, wt)?;

    Ok(Graph {
        params,
        total,
        outcome: lq,
        propensity: lg,
        targeting: lt,
        q_factual,
        q_counterfactual,
        propensity_raw,
        perturbation,
        targeted,
        epsilon,
    })
}

fn columns(tape: &GradTape, nodes: &[NodeId], n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(nodes.len()); n];
    for &node in nodes {
        for (row, v) in out.iter_mut().zip(tape.value(node).data()) {
            row.push(*v);
        }
    }
    out
}

impl Graph {
    pub fn outputs(&self, tape: &GradTape, batch: &Batch) -> ForwardOutputs {
        let n = batch.size;
        ForwardOutputs {
            plan: batch.plan.clone(),
            observed: batch.observed.clone(),
            outcome: batch.outcome.data().to_vec(),
            q_factual: columns(tape, &self.q_factual, n),
            q_counterfactual: columns(tape, &self.q_counterfactual, n),
            propensity: columns(tape, &self.propensity_raw, n),
            perturbation: columns(tape, &self.perturbation, n),
            targeted: columns(tape, &self.targeted, n),
            epsilon: tape.value(self.epsilon).item(),
        }
    }

    pub fn loss_parts(&self, tape: &GradTape) -> LossParts {
        LossParts {
            total: tape.value(self.total).item(),
            outcome: tape.value(self.outcome).item(),
            propensity: tape.value(self.propensity).item(),
            targeting: tape.value(self.targeting).item(),
        }
    }

    /// Gradients of the total loss, aligned with the network parameters.
    pub fn gradients(&self, tape: &GradTape) -> Result<Vec<Option<Tensor>>> {
        let mut adj = tape.backward(self.total)?;
        Ok(self
            .params
            .iter()
            .map(|id| adj.get_mut(id.index()).and_then(Option::take))
            .collect())
    }
}

/// Forward pass without gradients.
pub fn forward(net: &Network, batch: &Batch, opts: &ForwardOptions) -> Result<ForwardOutputs> {
    let mut tape = GradTape::new();
    let graph = record(&mut tape, net, batch, opts, 0.0, 0.0)?;
    Ok(graph.outputs(&tape, batch))
}

/// Loss, outputs and parameter gradients at the current parameters.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: LossParts,
    pub outputs: ForwardOutputs,
    pub gradients: Vec<Option<Tensor>>,
}

impl Evaluation {
    /// `∂L/∂ε`.
    pub fn epsilon_gradient(&self, net: &Network) -> f64 {
        self.gradients[net.layout.epsilon].as_ref().map_or(0.0, Tensor::item)
    }
}

pub fn evaluate(net: &Network, batch: &Batch, opts: &ForwardOptions, alpha: f64, beta: f64) -> Result<Evaluation> {
    let mut tape = GradTape::new();
    let graph = record(&mut tape, net, batch, opts, alpha, beta)?;
    Ok(Evaluation {
        loss: graph.loss_parts(&tape),
        outputs: graph.outputs(&tape, batch),
        gradients: graph.gradients(&tape)?,
    })
}

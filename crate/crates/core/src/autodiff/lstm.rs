//! Single-layer LSTM cell and variational dropout masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{GradTape, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Keep masks for one batch of trajectories. Each row belongs to one
/// trajectory and is reused at every time step.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutPlan {
    rate: f64,
    input: Tensor,
    recurrent: Tensor,
}

/// A [`DropoutPlan`] recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct DropoutMasks {
    pub input: NodeId,
    pub recurrent: NodeId,
}

/// Samples Bernoulli(1 - p) keep masks scaled by `1 / (1 - p)`.
pub fn make_dropout_plan(batch: usize, input_dim: usize, hidden_dim: usize, p: f64, seed: u64) -> Result<DropoutPlan> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 - p;
    let scale = 1.0 / keep;
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if p == 0.0 || rng.random::<f64>() < keep {
                    scale
                } else {
                    0.0
                }
            })
            .collect()
    };
    let input = Tensor::matrix(batch, input_dim, draw(batch * input_dim))?;
    let recurrent = Tensor::matrix(batch, hidden_dim, draw(batch * hidden_dim))?;
    Ok(DropoutPlan {
        rate: p,
        input,
        recurrent,
    })
}

impl DropoutPlan {
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn input_mask(&self) -> &Tensor {
        &self.input
    }

    pub fn recurrent_mask(&self) -> &Tensor {
        &self.recurrent
    }

    pub fn record(&self, tape: &mut GradTape) -> Result<DropoutMasks> {
        Ok(DropoutMasks {
            input: tape.constant(self.input.clone())?,
            recurrent: tape.constant(self.recurrent.clone())?,
        })
    }
}

/// Recorded LSTM weights. Gate blocks are laid out `[input, forget,
/// candidate, output]` along the columns.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    /// `input_dim x 4H`
    pub w_input: NodeId,
    /// `H x 4H`
    pub w_hidden: NodeId,
    /// `1 x 4H`
    pub bias: NodeId,
    pub hidden: usize,
}

/// One LSTM step. Returns `(h_t, c_t)`.
pub fn lstm_cell(
    tape: &mut GradTape,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
    w: &LstmWeights,
    dropout: Option<&DropoutMasks>,
) -> Result<(NodeId, NodeId)> {
    let h = w.hidden;
    if tape.value(w.w_input).cols() != 4 * h
        || tape.value(w.w_hidden).rows() != h
        || tape.value(h_prev).cols() != h
        || tape.value(c_prev).cols() != h
    {
        return Err(Error::Shape {
            op: "lstm_cell",
            detail: format!(
                "hidden size {h}, w_input {:?}, w_hidden {:?}, h_prev {:?}, c_prev {:?}",
                tape.value(w.w_input).shape(),
                tape.value(w.w_hidden).shape(),
                tape.value(h_prev).shape(),
                tape.value(c_prev).shape()
            ),
        });
    }
    let (x, h_in) = match dropout {
        Some(m) => (tape.mul(x, m.input)?, tape.mul(h_prev, m.recurrent)?),
        None => (x, h_prev),
    };
    let zx = tape.matmul(x, w.w_input)?;
    let zh = tape.matmul(h_in, w.w_hidden)?;
    let z = tape.add(zx, zh)?;
    let z = tape.add_row(z, w.bias)?;

    let i_pre = tape.slice_cols(z, 0, h)?;
    let f_pre = tape.slice_cols(z, h, 2 * h)?;
    let g_pre = tape.slice_cols(z, 2 * h, 3 * h)?;
    let o_pre = tape.slice_cols(z, 3 * h, 4 * h)?;
    let i = tape.sigmoid(i_pre)?;
    let f = tape.sigmoid(f_pre)?;
    let g = tape.tanh(g_pre)?;
    let o = tape.sigmoid(o_pre)?;

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c)?;
    let h_new = tape.mul(o, c_act)?;
    Ok((h_new, c))
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization.
pub fn uniform_init<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

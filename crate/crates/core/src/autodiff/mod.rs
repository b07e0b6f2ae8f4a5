//! Dense tensors, a gradient tape, the Adam optimizer and an LSTM cell with
//! variational dropout.

mod adam;
mod lstm;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use lstm::{lstm_cell, make_dropout_plan, uniform_init, DropoutMasks, DropoutPlan, LstmWeights};
pub use tape::{GradTape, Gradients, NodeId, ParamId};
pub use tensor::Tensor;

pub(crate) use tape::sigmoid;

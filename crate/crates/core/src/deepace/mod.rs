//! DeepACE: a shared LSTM encoder read twice (observed and planned
//! treatment histories), per-step outcome and propensity heads, and a
//! scalar perturbation `ε` that targets the first-step output.

mod checkpoint;
mod config;
mod forward;
mod network;
mod train;

pub use checkpoint::{checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use forward::{
    compute_eif, evaluate, forward, loss, perturbation_values, Evaluation, ForwardOptions, ForwardOutputs, LossParts,
    TargetMode, PROPENSITY_CEIL, PROPENSITY_FLOOR,
};
pub use network::{Batch, HeadSlots, Layout, Network, Standardizer};
pub use train::{
    estimate_ace, estimate_theta, mc_dropout_estimates, train, train_monitored, AceEstimate, FittedModel, StepReport,
};

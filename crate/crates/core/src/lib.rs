//! Estimation of time-varying average causal effects from longitudinal
//! observational trajectories.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense tensors with reverse-mode gradients, Adam, LSTM cell.
//! - [`datagen`]: synthetic and semi-synthetic trajectory generators with an
//!   exact counterfactual oracle.
//! - [`deepace`]: the end-to-end iterative G-computation network with its
//!   sequential targeting layer.
//! - [`baselines`]: iterative G-computation, LTMLE, MSM and the parametric
//!   G-formula over ridge/logistic regressors.
//! - [`experiment`]: tuning, benchmark sweeps and reports.

pub mod autodiff;
pub mod baselines;
pub mod datagen;
pub mod deepace;
pub mod error;
pub mod experiment;
pub mod seed;

pub use error::{Error, Result};

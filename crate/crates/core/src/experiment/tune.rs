use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, InterventionPlan};
use crate::deepace::{train, ModelConfig};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// One evaluated hyperparameter candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub config: ModelConfig,
    pub validation_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: ModelConfig,
    pub best_index: usize,
    pub candidates: Vec<Candidate>,
}

/// Draws `n` candidates from the search space: hidden width in
/// `{p, 2p, 3p, 4p}`, learning rate log-uniform on `[1e-4, 1e-3]`, batch
/// size in `{64, 128}` and dropout in `{0, 0.1, 0.2, 0.3}`. Every other field
/// is copied from `base`.
pub fn sample_candidates(base: &ModelConfig, p: usize, n: usize, seed: u64) -> Vec<ModelConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "tune/space"));
    (0..n)
        .map(|j| {
            let hidden = p * rng.random_range(1..=4usize);
            let log_lr = rng.random_range(1e-4f64.ln()..=1e-3f64.ln());
            let batch_size = *[64, 128].choose(&mut rng).expect("non-empty");
            let dropout = *[0.0, 0.1, 0.2, 0.3].choose(&mut rng).expect("non-empty");
            ModelConfig {
                hidden,
                learning_rate: log_lr.exp(),
                batch_size,
                dropout,
                seed: derive_seed(seed, &format!("tune/candidate/{j}")),
                ..base.clone()
            }
        })
        .collect()
}

/// Seeded split into training and validation indices.
pub fn train_validation_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Config(format!(
            "cannot split {n} patients with training fraction {train_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "tune/split")));
    let validation = idx.split_off(n_train);
    Ok((idx, validation))
}

/// Random search minimising the validation MSE of the last factual outcome
/// head. Ties keep the earliest candidate.
pub fn cmd_tune(
    data: &Dataset,
    plan: &InterventionPlan,
    base: &ModelConfig,
    n_iter: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<TuneResult> {
    if n_iter == 0 {
        return Err(Error::Config("n_iter must be at least 1".into()));
    }
    let (train_idx, val_idx) = train_validation_split(data.len(), train_fraction, seed)?;
    let train_set = data.subset(&train_idx)?;
    let val_set = data.subset(&val_idx)?;
    let mut candidates = Vec::with_capacity(n_iter);
    let mut best_index = 0;
    for (j, config) in sample_candidates(base, data.p, n_iter, seed).into_iter().enumerate() {
        let fitted = train(&train_set, plan, &config)?;
        let mse = fitted.factual_mse(&val_set)?;
        if j == 0 || mse < candidates_mse(&candidates, best_index) {
            best_index = j;
        }
        candidates.push(Candidate {
            config,
            validation_mse: mse,
        });
    }
    Ok(TuneResult {
        best: candidates[best_index].config.clone(),
        best_index,
        candidates,
    })
}

fn candidates_mse(c: &[Candidate], i: usize) -> f64 {
    c.get(i).map_or(f64::INFINITY, |c| c.validation_mse)
}

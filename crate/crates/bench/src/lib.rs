//! Fixtures shared by the benchmarks.

use longace_core::datagen::{generate, Dataset, DgpConfig};
use longace_core::deepace::ModelConfig;

/// Synthetic dataset with `n` patients over `horizon` steps, `p = 6`, `h = 5`.
pub fn synthetic(n: usize, horizon: usize, seed: u64) -> Dataset {
    generate(
        &DgpConfig {
            n,
            horizon,
            lag: 5.min(horizon),
            ..DgpConfig::synthetic()
        }
        .with_seed(seed),
    )
    .expect("valid benchmark configuration")
}

/// Width-12 network trained for a single epoch.
pub fn one_epoch() -> ModelConfig {
    ModelConfig {
        hidden: 12,
        epochs: 1,
        ..ModelConfig::default()
    }
}

//! Synthetic and semi-synthetic longitudinal data with recorded noise, and
//! the counterfactual oracle that re-simulates them under forced treatments.

mod io;
mod plan;
mod simulate;
mod types;

pub use io::{dataset_to_csv, load_dataset, noise_sidecar_path, save_dataset};
pub use plan::{intervention_grid, scaled_intervention_grid, InterventionPlan, Setup, SETUP_WINDOWS};
pub use simulate::{
    counterfactual_outcomes, gen_semisynthetic, gen_synthetic, generate, ground_truth_ace, ground_truth_theta,
    initial_treatment_level, next_treatment_level, oracle_propensities, resimulate_factual, TAN_MARGIN,
};
pub use types::{
    digest_hex, Dataset, DgpConfig, DgpKind, DgpWeights, NoiseBundle, NoiseRecord, Trajectory, TreatmentMode,
};

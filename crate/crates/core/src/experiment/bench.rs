use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use super::config::{EstimatorKind, ExperimentConfig};
use super::report::{aggregate, BenchmarkReport, RunRecord};
use super::tune::cmd_tune;
use crate::baselines::{
    fit_propensities, gformula_ace, iterative_gcomp_ace, ltmle_ace, msm_ace, GFormulaOptions, MsmOptions, RegressorSpec,
};
use crate::datagen::{
    generate, ground_truth_ace, oracle_propensities, save_dataset, scaled_intervention_grid, Dataset, DgpConfig, Setup,
};
use crate::deepace::{estimate_ace, train, ModelConfig};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Dataset of replicate `r`; shared by every estimator and setup so that
/// their errors are paired.
pub fn replicate_dgp(cfg: &ExperimentConfig, replicate: u64) -> DgpConfig {
    cfg.dgp
        .clone()
        .with_seed(derive_seed(cfg.seed, &format!("data/{replicate}")))
}

pub fn run_seed(master: u64, estimator: EstimatorKind, setup: usize, replicate: u64) -> u64 {
    derive_seed(master, &format!("run/{estimator}/{setup}/{replicate}"))
}

fn selected_setups(cfg: &ExperimentConfig) -> Vec<Setup> {
    let grid = scaled_intervention_grid(cfg.dgp.horizon);
    cfg.setups.iter().map(|&id| grid[id - 1].clone()).collect()
}

/// Effect estimate of one estimator on one dataset.
pub fn run_estimator(
    kind: EstimatorKind,
    data: &Dataset,
    setup: &Setup,
    cfg: &ExperimentConfig,
    model: &ModelConfig,
    seed: u64,
    psi_true: f64,
) -> Result<f64> {
    let (a, b) = (setup.treated.as_slice(), setup.control.as_slice());
    let spec = RegressorSpec {
        lambda: cfg.baselines.lambda,
        use_covariates: !cfg.baselines.omit_covariates,
    };
    let propensities = || {
        if cfg.baselines.oracle_propensities {
            oracle_propensities(data)
        } else {
            fit_propensities(data, cfg.baselines.lambda)
        }
    };
    let psi = match kind {
        EstimatorKind::Oracle => psi_true,
        EstimatorKind::Deepace | EstimatorKind::DeepaceUntargeted => {
            let mut config = model.clone();
            if kind == EstimatorKind::DeepaceUntargeted {
                config.beta = 0.0;
            }
            let arm_a = train(
                data,
                &setup.treated,
                &config.clone().with_seed(derive_seed(seed, "arm/a")),
            )?;
            let arm_b = train(data, &setup.control, &config.with_seed(derive_seed(seed, "arm/b")))?;
            estimate_ace(&arm_a, &arm_b, data)?.psi
        }
        EstimatorKind::IterativeGcomp => iterative_gcomp_ace(data, a, b, &spec)?.psi,
        EstimatorKind::LtmleGlm => ltmle_ace(data, a, b, &spec, &propensities()?)?.psi,
        EstimatorKind::Msm => {
            let opts = if cfg.baselines.oracle_propensities {
                let g = oracle_propensities(data)?;
                MsmOptions {
                    lambda: cfg.baselines.lambda,
                    numerator: None,
                    denominator: Some(g),
                }
            } else {
                MsmOptions {
                    lambda: cfg.baselines.lambda,
                    ..MsmOptions::default()
                }
            };
            msm_ace(data, a, b, &opts)?.psi
        }
        EstimatorKind::Gformula => {
            let opts = GFormulaOptions {
                n_mc: cfg.baselines.n_mc,
                lambda: cfg.baselines.lambda,
                seed,
                zero_variance: false,
            };
            gformula_ace(data, a, b, &opts)?.psi
        }
    };
    if psi.is_finite() {
        Ok(psi)
    } else {
        Err(Error::Contract(format!("{kind} produced a non-finite effect")))
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every (estimator, setup, replicate) combination. Estimator failures
/// are recorded in their run and do not stop the sweep.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let setups = selected_setups(cfg);
    let pool = pool(cfg.jobs)?;
    pool.install(|| {
        let datasets: Vec<Dataset> = cfg
            .seeds
            .par_iter()
            .map(|&r| generate(&replicate_dgp(cfg, r)))
            .collect::<Result<_>>()?;
        let mut truths = BTreeMap::new();
        for s in &setups {
            for (r, data) in cfg.seeds.iter().zip(&datasets) {
                truths.insert(
                    (s.id, *r),
                    ground_truth_ace(data, s.treated.as_slice(), s.control.as_slice())?,
                );
            }
        }

        let needs_model = cfg.estimators.iter().any(|e| e.uses_network());
        let models: BTreeMap<usize, ModelConfig> = if needs_model && cfg.tune.enabled {
            setups
                .par_iter()
                .map(|s| {
                    let tuned = cmd_tune(
                        &datasets[0],
                        &s.treated,
                        &cfg.deepace,
                        cfg.tune.n_iter,
                        cfg.tune.train_fraction,
                        derive_seed(cfg.seed, &format!("tune/{}", s.id)),
                    )?;
                    Ok((s.id, tuned.best))
                })
                .collect::<Result<_>>()?
        } else {
            setups.iter().map(|s| (s.id, cfg.deepace.clone())).collect()
        };

        let mut jobs = Vec::new();
        for &est in &cfg.estimators {
            for s in &setups {
                for (ri, &r) in cfg.seeds.iter().enumerate() {
                    jobs.push((est, s, ri, r));
                }
            }
        }
        let runs: Vec<RunRecord> = jobs
            .par_iter()
            .map(|&(est, setup, ri, r)| {
                let psi_true = truths[&(setup.id, r)];
                let started = Instant::now();
                let seed = run_seed(cfg.seed, est, setup.id, r);
                let outcome = run_estimator(est, &datasets[ri], setup, cfg, &models[&setup.id], seed, psi_true);
                let wall_ms = started.elapsed().as_secs_f64() * 1e3;
                let (psi_hat, abs_err, error) = match outcome {
                    Ok(psi) => (Some(psi), Some((psi - psi_true).abs()), None),
                    Err(e) => (None, None, Some(e.to_string())),
                };
                RunRecord {
                    estimator: est.name().into(),
                    setup: setup.id,
                    seed: r,
                    psi_hat,
                    psi_true,
                    abs_err,
                    wall_ms,
                    error,
                }
            })
            .collect();
        let aggregates = aggregate(&runs);
        let created_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        Ok(BenchmarkReport {
            config_fingerprint: cfg.fingerprint(),
            created_unix_ms,
            runs,
            aggregates,
        })
    })
}

/// Simulates `dgp` and writes the dataset CSV and its noise sidecar.
pub fn cmd_generate(dgp: &DgpConfig, path: &Path) -> Result<Dataset> {
    let data = generate(dgp)?;
    save_dataset(&data, path)?;
    Ok(data)
}

/// Loads a stored report, verifies its aggregates and renders the table.
pub fn cmd_report(path: &Path) -> Result<String> {
    Ok(BenchmarkReport::load(path)?.render_table())
}

/// Writes `report.json` and `report.txt` into `dir`; returns both paths.
pub fn write_report(report: &BenchmarkReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("report.json");
    let txt = dir.join("report.txt");
    std::fs::write(&json, report.to_json()? + "\n").map_err(|e| Error::io(&json, e))?;
    std::fs::write(&txt, report.render_table()).map_err(|e| Error::io(&txt, e))?;
    Ok((json, txt))
}

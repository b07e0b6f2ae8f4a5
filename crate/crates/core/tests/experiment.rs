use longace_core::datagen::{load_dataset, DgpConfig, InterventionPlan};
use longace_core::deepace::ModelConfig;
use longace_core::experiment::{
    aggregate, cmd_bench, cmd_generate, cmd_report, cmd_tune, mean_std, sample_candidates, write_report,
    BenchmarkReport, EstimatorKind, ExperimentConfig, RunRecord,
};

fn small_config(estimators: Vec<EstimatorKind>) -> ExperimentConfig {
    ExperimentConfig {
        seed: 5,
        seeds: vec![0, 1, 2, 3, 4],
        estimators,
        setups: vec![1, 2, 3],
        dgp: DgpConfig {
            n: 80,
            horizon: 6,
            lag: 2,
            ..DgpConfig::synthetic()
        },
        ..ExperimentConfig::default()
    }
}

fn strip_timing(mut r: BenchmarkReport) -> BenchmarkReport {
    r.created_unix_ms = 0;
    r.runs.iter_mut().for_each(|run| run.wall_ms = 0.0);
    r
}

#[test]
fn oracle_passthrough_has_zero_error() {
    let report = cmd_bench(&small_config(vec![EstimatorKind::Oracle])).unwrap();
    assert_eq!(report.runs.len(), 15);
    for run in &report.runs {
        assert_eq!(run.psi_hat, Some(run.psi_true));
        assert_eq!(run.abs_err, Some(0.0));
    }
    assert!(report
        .aggregates
        .iter()
        .all(|a| a.mean == 0.0 && a.std == 0.0 && a.n == 5));
}

#[test]
fn two_estimators_three_setups_five_seeds_is_thirty_runs() {
    let cfg = small_config(vec![EstimatorKind::Oracle, EstimatorKind::IterativeGcomp]);
    let report = cmd_bench(&cfg).unwrap();
    assert_eq!(report.runs.len(), 30);
    assert_eq!(report.aggregates.len(), 6);
    assert_eq!(report.config_fingerprint, cfg.fingerprint());
    // Runs are grouped by estimator, then setup, then replicate.
    assert_eq!(report.runs[0].estimator, "oracle");
    assert_eq!(report.runs[29].estimator, "iterative_gcomp");
    assert_eq!((report.runs[5].setup, report.runs[5].seed), (2, 0));
    // The same dataset (and truth) is shared across estimators.
    assert_eq!(report.runs[3].psi_true, report.runs[18].psi_true);
}

#[test]
fn bench_is_deterministic_modulo_timing() {
    let cfg = small_config(vec![
        EstimatorKind::IterativeGcomp,
        EstimatorKind::Msm,
        EstimatorKind::Gformula,
    ]);
    let a = strip_timing(cmd_bench(&cfg).unwrap());
    let b = strip_timing(cmd_bench(&cfg).unwrap());
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn failed_runs_are_isolated() {
    let mut cfg = small_config(vec![EstimatorKind::Oracle, EstimatorKind::IterativeGcomp]);
    // Fewer patients than history features and no ridge penalty: the outcome
    // regressions are singular.
    cfg.dgp.n = 4;
    cfg.baselines.lambda = 0.0;
    cfg.seeds = vec![0, 1];
    let report = cmd_bench(&cfg).unwrap();
    assert_eq!(report.runs.len(), 12);
    for run in &report.runs {
        if run.estimator == "oracle" {
            assert_eq!(run.abs_err, Some(0.0));
        } else {
            assert!(run.psi_hat.is_none() && run.abs_err.is_none());
            assert!(
                run.error.as_deref().is_some_and(|e| e.contains("singular")),
                "{:?}",
                run.error
            );
        }
    }
    assert!(report.aggregates.iter().all(|a| a.estimator == "oracle"));
}

fn record(estimator: &str, setup: usize, seed: u64, err: f64) -> RunRecord {
    RunRecord {
        estimator: estimator.into(),
        setup,
        seed,
        psi_hat: Some(1.0 + err),
        psi_true: 1.0,
        abs_err: Some(err),
        wall_ms: 1.0,
        error: None,
    }
}

#[test]
fn sample_standard_deviation() {
    let (m, s) = mean_std(&[0.1, 0.2, 0.6]);
    assert!((m - 0.3).abs() < 1e-15);
    // sqrt(((0.2)^2 + (0.1)^2 + (0.3)^2) / 2)
    assert!((s - 0.07f64.sqrt()).abs() < 1e-15);
    assert_eq!(mean_std(&[0.4]), (0.4, 0.0));
}

#[test]
fn stored_aggregates_recompute_from_runs() {
    let report = cmd_bench(&small_config(vec![EstimatorKind::IterativeGcomp, EstimatorKind::Msm])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (json, txt) = write_report(&report, dir.path()).unwrap();
    let loaded = BenchmarkReport::load(&json).unwrap();
    let again = aggregate(&loaded.runs);
    for (a, b) in again.iter().zip(&loaded.aggregates) {
        assert_eq!((&a.estimator, a.setup, a.n), (&b.estimator, b.setup, b.n));
        assert!((a.mean - b.mean).abs() <= 1e-12 && (a.std - b.std).abs() <= 1e-12);
    }
    assert_eq!(std::fs::read_to_string(txt).unwrap(), cmd_report(&json).unwrap());

    let mut tampered = loaded.clone();
    tampered.aggregates[0].mean += 1e-6;
    std::fs::write(&json, tampered.to_json().unwrap()).unwrap();
    assert!(cmd_report(&json).is_err());
    std::fs::write(&json, "{ not json").unwrap();
    assert!(cmd_report(&json).is_err());
}

fn report_from(runs: Vec<RunRecord>) -> BenchmarkReport {
    BenchmarkReport {
        config_fingerprint: "x".into(),
        created_unix_ms: 0,
        aggregates: aggregate(&runs),
        runs,
    }
}

#[test]
fn single_cell_table_has_one_row() {
    let table = report_from(vec![record("msm", 2, 0, 0.25)]).render_table();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "estimator          setup 2");
    assert!(lines[1].chars().all(|c| c == '-'));
    assert_eq!(lines[2], "msm        0.250 ± 0.000 *");
}

#[test]
fn table_rows_follow_declared_order_and_flag_the_best() {
    let runs = vec![
        record("msm", 1, 0, 0.5),
        record("msm", 1, 1, 0.7),
        record("deepace", 1, 0, 0.1),
        record("deepace", 1, 1, 0.3),
        record("iterative_gcomp", 1, 0, 0.9),
    ];
    let table = report_from(runs).render_table();
    let names: Vec<&str> = table
        .lines()
        .skip(2)
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(names, ["msm", "deepace", "iterative_gcomp"]);
    let starred: Vec<&str> = table.lines().filter(|l| l.ends_with('*')).collect();
    assert_eq!(starred.len(), 1);
    assert!(starred[0].starts_with("deepace"));
    assert!(table.contains("0.200 ± 0.141"));
}

#[test]
fn generate_is_byte_identical_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let dgp = DgpConfig::synthetic().with_seed(11);
    let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    cmd_generate(&dgp, &p1).unwrap();
    cmd_generate(&dgp, &p2).unwrap();
    let (a, b) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 15_001);
    let reloaded = load_dataset(&p1).unwrap();
    assert_eq!((reloaded.len(), reloaded.horizon, reloaded.p), (1000, 15, 6));
    assert!(reloaded.noise.is_some());
}

fn quick_model() -> ModelConfig {
    ModelConfig {
        hidden: 4,
        epochs: 1,
        batch_size: 64,
        ..ModelConfig::default()
    }
}

fn tune_data() -> longace_core::datagen::Dataset {
    longace_core::datagen::generate(&DgpConfig {
        n: 60,
        horizon: 3,
        p: 2,
        lag: 1,
        ..DgpConfig::synthetic()
    })
    .unwrap()
}

#[test]
fn tune_with_one_iteration_returns_the_sampled_config() {
    let data = tune_data();
    let plan = InterventionPlan::ones(3);
    let result = cmd_tune(&data, &plan, &quick_model(), 1, 0.8, 3).unwrap();
    assert_eq!(result.candidates.len(), 1);
    assert_eq!(result.best_index, 0);
    assert_eq!(result.best, sample_candidates(&quick_model(), 2, 1, 3)[0]);
}

#[test]
fn tune_ties_keep_the_first_candidate() {
    let data = tune_data();
    let plan = InterventionPlan::ones(3);
    let base = ModelConfig {
        epochs: 0,
        ..quick_model()
    };
    let result = cmd_tune(&data, &plan, &base, 5, 0.8, 8).unwrap();
    let best = result.candidates[result.best_index].validation_mse;
    let first_min = result.candidates.iter().position(|c| c.validation_mse == best).unwrap();
    assert_eq!(result.best_index, first_min);
    assert!(result.candidates.iter().all(|c| c.validation_mse >= best));
}

#[test]
fn tune_is_deterministic() {
    let data = tune_data();
    let plan = InterventionPlan::zeros(3);
    let a = cmd_tune(&data, &plan, &quick_model(), 3, 0.8, 21).unwrap();
    let b = cmd_tune(&data, &plan, &quick_model(), 3, 0.8, 21).unwrap();
    assert_eq!(a, b);
    assert!(cmd_tune(&data, &plan, &quick_model(), 0, 0.8, 21).is_err());
}

#[test]
fn candidates_stay_inside_the_search_space() {
    for c in sample_candidates(&ModelConfig::default(), 6, 200, 4) {
        assert!([6, 12, 18, 24].contains(&c.hidden));
        assert!((1e-4..=1e-3).contains(&c.learning_rate));
        assert!([64, 128].contains(&c.batch_size));
        assert!([0.0, 0.1, 0.2, 0.3].contains(&c.dropout));
        assert_eq!((c.alpha, c.beta), (0.1, 0.05));
    }
}

#[test]
fn config_parses_from_toml() {
    let text = r#"
        seed = 7
        seeds = [0, 1]
        estimators = ["deepace", "iterative_gcomp", "ltmle_glm"]
        setups = [1]

        [dgp]
        n = 200
        horizon = 5

        [deepace]
        hidden = 8
        epochs = 3

        [baselines]
        n_mc = 4
    "#;
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();
    assert_eq!(cfg.estimators[0], EstimatorKind::Deepace);
    assert_eq!((cfg.dgp.n, cfg.dgp.horizon, cfg.dgp.p), (200, 5, 6));
    assert_eq!((cfg.deepace.hidden, cfg.deepace.beta), (8, 0.05));

    let mut moved = cfg.clone();
    moved.out = Some("/tmp/elsewhere".into());
    moved.jobs = Some(3);
    assert_eq!(moved.fingerprint(), cfg.fingerprint());
    let mut changed = cfg.clone();
    changed.seed = 8;
    assert_ne!(changed.fingerprint(), cfg.fingerprint());

    assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    assert!(ExperimentConfig::from_toml_str("estimators = []").is_err());
    assert!(ExperimentConfig::from_toml_str("setups = [4]").is_err());
    assert!(ExperimentConfig::from_toml_str("estimators = [\"msm\", \"msm\"]").is_err());
}

use longace_core::autodiff::Tensor;
use longace_core::datagen::{gen_synthetic, Dataset, DgpConfig, InterventionPlan};
use longace_core::deepace::{
    checkpoint_from_json, checkpoint_to_json, compute_eif, estimate_ace, estimate_theta, evaluate, forward, loss,
    mc_dropout_estimates, perturbation_values, train, train_monitored, Batch, ForwardOptions, ForwardOutputs,
    ModelConfig, Network, Standardizer, TargetMode,
};
use longace_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_data(n: usize, horizon: usize, p: usize, seed: u64) -> Dataset {
    gen_synthetic(&DgpConfig {
        n,
        horizon,
        p,
        lag: 2,
        ..DgpConfig::synthetic().with_seed(seed)
    })
    .unwrap()
}

/// Network with every tensor redrawn from U(-scale, scale) and a random ε.
fn random_network(p: usize, horizon: usize, hidden: usize, seed: u64, scale: f64) -> Network {
    let mut net = Network::init(p, horizon, hidden, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for t in &mut net.params {
        t.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-scale..scale));
    }
    net
}

fn quick_config(seed: u64) -> ModelConfig {
    ModelConfig {
        hidden: 6,
        batch_size: 32,
        dropout: 0.0,
        epochs: 3,
        ..ModelConfig::default().with_seed(seed)
    }
}

fn hand_outputs() -> ForwardOutputs {
    ForwardOutputs {
        plan: vec![1, 1],
        observed: vec![vec![1, 0]],
        outcome: vec![0.7],
        q_factual: vec![vec![0.3, 0.9]],
        q_counterfactual: vec![vec![0.4, 0.6]],
        propensity: vec![vec![0.8, 0.3]],
        perturbation: vec![vec![-1.25, 0.0, 0.0]],
        targeted: vec![vec![-0.225, 0.6, 0.7]],
        epsilon: 0.5,
    }
}

#[test]
fn eif_arithmetic_example() {
    let out = ForwardOutputs {
        plan: vec![1, 1],
        observed: vec![vec![1, 1]],
        outcome: vec![0.25],
        q_factual: vec![vec![0.0, 0.0]],
        q_counterfactual: vec![vec![1.0, 0.5]],
        propensity: vec![vec![0.5, 0.5]],
        perturbation: vec![vec![0.0; 3]],
        targeted: vec![vec![1.0, 0.5, 0.25]],
        epsilon: 0.0,
    };
    let phi = compute_eif(&out, 0.8);
    assert!((phi[0] + 1.8).abs() < 1e-12, "{phi:?}");
}

#[test]
fn eif_of_constant_outputs_is_zero() {
    let mut out = hand_outputs();
    out.observed = vec![vec![1, 1]];
    out.targeted = vec![vec![0.3; 3]];
    assert_eq!(compute_eif(&out, 0.3), vec![0.0]);
}

#[test]
fn perturbation_recursion_unrolls() {
    assert_eq!(perturbation_values(&[1.0, 1.0]), vec![-2.0, -1.0, 0.0]);
}

#[test]
fn hand_set_loss_matches_scratch_values() {
    let parts = loss(&hand_outputs(), 0.1, 0.05).unwrap();
    assert!((parts.outcome - 0.06500000000000002).abs() < 1e-12);
    assert!((parts.propensity - 0.2899092476264711).abs() < 1e-12);
    assert!((parts.targeting - 0.17265624999999998).abs() < 1e-12);
    assert!((parts.total - 0.10262373726264713).abs() < 1e-12);
}

#[test]
fn untargeted_loss_drops_targeting_term() {
    let parts = loss(&hand_outputs(), 0.1, 0.0).unwrap();
    assert_eq!(parts.total, parts.outcome + 0.1 * parts.propensity);
}

#[test]
fn perfect_heads_zero_outcome_loss() {
    let mut out = hand_outputs();
    out.q_factual = vec![vec![0.6, 0.7]];
    out.propensity = vec![vec![1.0, 0.0]];
    let parts = loss(&out, 0.1, 0.05).unwrap();
    assert_eq!(parts.outcome, 0.0);
    // Clipping bounds the cross-entropy at -ln(0.99).
    assert!((parts.propensity + 0.99f64.ln()).abs() < 1e-12);
}

#[test]
fn graph_values_agree_with_value_level_functions() {
    let data = toy_data(12, 4, 3, 1);
    let plan = InterventionPlan::window(4, 2, 3);
    let std = Standardizer::fit(&data);
    let batch = Batch::full(&data, plan.as_slice(), &std).unwrap();
    let net = random_network(3, 4, 5, 2, 0.5);
    let eval = evaluate(&net, &batch, &ForwardOptions::default(), 0.3, 0.7).unwrap();
    let by_value = loss(&eval.outputs, 0.3, 0.7).unwrap();
    assert!((by_value.total - eval.loss.total).abs() < 1e-12);
    assert!((by_value.outcome - eval.loss.outcome).abs() < 1e-12);
    assert!((by_value.propensity - eval.loss.propensity).abs() < 1e-12);
    assert!((by_value.targeting - eval.loss.targeting).abs() < 1e-12);

    let products = eval.outputs.inverse_weight_products();
    for (i, q) in eval.outputs.perturbation.iter().enumerate() {
        let expect = perturbation_values(&products[i]);
        for (a, b) in q.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*q.last().unwrap(), 0.0);
        for (k, qk) in q.iter().enumerate().take(4) {
            let want = eval.outputs.q_counterfactual[i][k] + eval.outputs.epsilon * qk;
            assert_eq!(eval.outputs.targeted[i][k], want);
        }
        assert_eq!(eval.outputs.targeted[i][4], eval.outputs.outcome[i]);
    }
}

#[test]
fn non_compliant_first_step_removes_targeting() {
    let data = toy_data(30, 4, 2, 3);
    let std = Standardizer::fit(&data);
    let net = random_network(2, 4, 4, 4, 0.5);
    let plan = InterventionPlan::ones(4);
    let batch = Batch::full(&data, plan.as_slice(), &std).unwrap();
    let out = forward(&net, &batch, &ForwardOptions::default()).unwrap();
    let theta = out.theta();
    let phi = compute_eif(&out, theta);
    let mut seen = 0;
    for (i, &phi_i) in phi.iter().enumerate() {
        if out.observed[i][0] != 1 {
            seen += 1;
            assert!(out.perturbation[i].iter().all(|&q| q == 0.0));
            assert_eq!(out.targeted[i][..4], out.q_counterfactual[i][..4]);
            assert_eq!(phi_i, out.targeted[i][0] - theta);
        }
    }
    assert!(seen > 0);
}

#[test]
fn matching_histories_give_identical_passes() {
    let data = toy_data(10, 5, 2, 5);
    let std = Standardizer::fit(&data);
    let net = random_network(2, 5, 4, 6, 0.7);
    let plan = InterventionPlan::new(data.trajectories[0].a.clone()).unwrap();
    let same: Vec<usize> = (0..data.len())
        .filter(|&i| data.trajectories[i].a == plan.as_slice())
        .collect();
    let batch = Batch::new(&data, &same, plan.as_slice(), &std).unwrap();
    let out = forward(&net, &batch, &ForwardOptions::default()).unwrap();
    assert_eq!(out.q_factual, out.q_counterfactual);
}

#[test]
fn zero_epsilon_leaves_outputs_untargeted() {
    let data = toy_data(16, 3, 2, 7);
    let std = Standardizer::fit(&data);
    let mut net = random_network(2, 3, 4, 8, 0.5);
    net.set_epsilon(0.0);
    let plan = InterventionPlan::zeros(3);
    let out = forward(
        &net,
        &Batch::full(&data, plan.as_slice(), &std).unwrap(),
        &ForwardOptions::default(),
    )
    .unwrap();
    for i in 0..out.len() {
        assert_eq!(&out.targeted[i][..3], &out.q_counterfactual[i][..]);
    }
    let mean_q2 = out.q_counterfactual.iter().map(|q| q[0]).sum::<f64>() / out.len() as f64;
    assert_eq!(out.theta(), mean_q2);
}

#[test]
fn targeting_identity_at_random_points() {
    let data = toy_data(20, 4, 3, 9);
    let std = Standardizer::fit(&data);
    for point in 0..20u64 {
        let plan = InterventionPlan::new((0..4).map(|k| ((point >> k) & 1) as u8).collect()).unwrap();
        let batch = Batch::full(&data, plan.as_slice(), &std).unwrap();
        let net = random_network(3, 4, 5, 100 + point, 0.8);
        let beta = 0.05 + 0.1 * point as f64;
        let eval = evaluate(&net, &batch, &ForwardOptions::default(), 0.1, beta).unwrap();
        let phi = compute_eif(&eval.outputs, eval.outputs.theta());
        let mean_phi = phi.iter().sum::<f64>() / phi.len() as f64;
        let lhs = eval.epsilon_gradient(&net);
        assert!(
            (lhs - beta / 4.0 * mean_phi).abs() <= 1e-8,
            "point {point}: {lhs} vs {}",
            beta / 4.0 * mean_phi
        );
    }
}

#[test]
fn stop_gradient_matches_detached_target_and_differs_from_live() {
    let data = toy_data(10, 4, 2, 10);
    let std = Standardizer::fit(&data);
    let plan = InterventionPlan::ones(4);
    let batch = Batch::full(&data, plan.as_slice(), &std).unwrap();
    let net = random_network(2, 4, 3, 11, 0.6);
    let grads = |mode| {
        let opts = ForwardOptions {
            dropout: None,
            target_mode: mode,
        };
        evaluate(&net, &batch, &opts, 0.0, 0.0).unwrap().gradients
    };
    let blocked = grads(TargetMode::StopGradient);
    let detached = grads(TargetMode::Constant);
    let live = grads(TargetMode::Live);
    assert_eq!(blocked, detached);
    let head = net.layout.outcome_heads[3].w2;
    assert_ne!(blocked[head], live[head]);
}

#[test]
fn full_batch_loss_does_not_increase_at_small_learning_rate() {
    let data = toy_data(40, 4, 2, 12);
    let config = ModelConfig {
        learning_rate: 1e-4,
        batch_size: 40,
        epochs: 6,
        dropout: 0.0,
        hidden: 4,
        ..ModelConfig::default()
    };
    let mut losses = Vec::new();
    train_monitored(&data, &InterventionPlan::ones(4), &config, |r| {
        losses.push(r.loss.total)
    })
    .unwrap();
    assert_eq!(losses.len(), 6);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{losses:?}");
    }
}

#[test]
fn identity_holds_along_training() {
    let data = toy_data(64, 5, 2, 13);
    let config = ModelConfig {
        dropout: 0.2,
        epochs: 4,
        ..quick_config(14)
    };
    let mut checked = 0;
    train_monitored(&data, &InterventionPlan::ones(5), &config, |r| {
        assert!(
            r.identity_residual() <= 1e-8,
            "step {}: {}",
            r.step,
            r.identity_residual()
        );
        checked += 1;
    })
    .unwrap();
    assert_eq!(checked, 8);
}

#[test]
fn training_is_deterministic_and_epochs_zero_returns_initial_network() {
    let data = toy_data(50, 4, 2, 15);
    let plan = InterventionPlan::window(4, 1, 2);
    let a = train(&data, &plan, &quick_config(3)).unwrap();
    let b = train(&data, &plan, &quick_config(3)).unwrap();
    assert_eq!(a, b);
    let zero = train(
        &data,
        &plan,
        &ModelConfig {
            epochs: 0,
            ..quick_config(3)
        },
    )
    .unwrap();
    assert_eq!(
        zero.network,
        Network::init(2, 4, 6, longace_core::seed::derive_seed(3, "init")).unwrap()
    );
    assert_ne!(zero.network, a.network);
}

#[test]
fn ace_is_antisymmetric_and_checks_fingerprints() {
    let data = toy_data(40, 3, 2, 16);
    let a = train(&data, &InterventionPlan::ones(3), &quick_config(1)).unwrap();
    let b = train(&data, &InterventionPlan::zeros(3), &quick_config(2)).unwrap();
    let ab = estimate_ace(&a, &b, &data).unwrap();
    let ba = estimate_ace(&b, &a, &data).unwrap();
    assert_eq!(ab.psi, -ba.psi);
    assert_eq!(ab.psi, ab.theta_a - ab.theta_b);
    assert_eq!(estimate_ace(&a, &a, &data).unwrap().psi, 0.0);
    assert_eq!(ab.theta_a, estimate_theta(&a, &data).unwrap());

    let other = toy_data(40, 3, 2, 17);
    assert!(matches!(
        estimate_ace(&a, &b, &other),
        Err(Error::FingerprintMismatch { .. })
    ));
}

#[test]
fn single_patient_theta_is_its_first_targeted_output() {
    let data = toy_data(30, 3, 2, 18);
    let fitted = train(&data, &InterventionPlan::ones(3), &quick_config(4)).unwrap();
    let one = data.subset(&[5]).unwrap();
    let out = fitted.predict(&one, None).unwrap();
    let theta = estimate_theta(&fitted, &one).unwrap();
    assert_eq!(theta, fitted.standardizer.inverse(out.targeted[0][0]));
}

#[test]
fn dropout_samples_behave() {
    let data = toy_data(40, 3, 2, 19);
    let plain_a = train(&data, &InterventionPlan::ones(3), &quick_config(5)).unwrap();
    let plain_b = train(&data, &InterventionPlan::zeros(3), &quick_config(6)).unwrap();
    let samples = mc_dropout_estimates(&plain_a, &plain_b, &data, 5, 1).unwrap();
    assert!(samples.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(samples[0], estimate_ace(&plain_a, &plain_b, &data).unwrap().psi);

    let noisy = |seed| ModelConfig {
        dropout: 0.2,
        ..quick_config(seed)
    };
    let a = train(&data, &InterventionPlan::ones(3), &noisy(5)).unwrap();
    let b = train(&data, &InterventionPlan::zeros(3), &noisy(6)).unwrap();
    let one = mc_dropout_estimates(&a, &b, &data, 1, 9).unwrap();
    let twenty = mc_dropout_estimates(&a, &b, &data, 20, 9).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0], twenty[0]);
    let mean = twenty.iter().sum::<f64>() / 20.0;
    let var = twenty.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 19.0;
    assert!(var.sqrt() > 0.0);
    assert!(mc_dropout_estimates(&a, &b, &data, 0, 9).is_err());
}

#[test]
fn checkpoint_round_trip_and_version_check() {
    let data = toy_data(20, 3, 2, 20);
    let fitted = train(&data, &InterventionPlan::ones(3), &quick_config(7)).unwrap();
    let text = checkpoint_to_json(&fitted).unwrap();
    assert_eq!(checkpoint_from_json(&text).unwrap(), fitted);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/model.json");
    longace_core::deepace::save_checkpoint(&fitted, &path).unwrap();
    assert_eq!(longace_core::deepace::load_checkpoint(&path).unwrap(), fitted);

    let bumped = text.replacen("\"version\": 1", "\"version\": 2", 1);
    assert!(matches!(
        checkpoint_from_json(&bumped),
        Err(Error::CheckpointVersion { expected: 1, found: 2 })
    ));
}

#[test]
fn severed_treatment_gives_near_zero_effect() {
    let mut errors = Vec::new();
    for seed in 0..3 {
        let data = gen_synthetic(&DgpConfig {
            n: 600,
            horizon: 6,
            sever_treatment: true,
            ..DgpConfig::synthetic().with_seed(seed)
        })
        .unwrap();
        let config = ModelConfig {
            hidden: 8,
            epochs: 15,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let a = train(&data, &InterventionPlan::ones(6), &config.clone().with_seed(seed + 10)).unwrap();
        let b = train(&data, &InterventionPlan::zeros(6), &config.with_seed(seed + 20)).unwrap();
        errors.push(estimate_ace(&a, &b, &data).unwrap().psi);
    }
    let mean = errors.iter().map(|e| e.abs()).sum::<f64>() / 3.0;
    assert!(mean < 0.1, "{errors:?}");
}

#[test]
fn batch_rejects_wrong_plan_length() {
    let data = toy_data(5, 3, 2, 21);
    assert!(Batch::full(&data, &[1, 1], &Standardizer::identity()).is_err());
    let t = Tensor::scalar(1.0);
    assert_eq!(t.item(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identity_holds_for_any_plan_and_parameters(
        bits in proptest::collection::vec(0u8..=1, 3),
        seed in 0u64..1000,
        beta in 0.0f64..2.0,
        eps in -3.0f64..3.0,
    ) {
        let data = toy_data(10, 3, 2, seed);
        let std = Standardizer::fit(&data);
        let batch = Batch::full(&data, &bits, &std).unwrap();
        let mut net = random_network(2, 3, 3, seed, 0.5);
        net.set_epsilon(eps);
        let eval = evaluate(&net, &batch, &ForwardOptions::default(), 0.1, beta).unwrap();
        let phi = compute_eif(&eval.outputs, eval.outputs.theta());
        let mean_phi = phi.iter().sum::<f64>() / phi.len() as f64;
        prop_assert!((eval.epsilon_gradient(&net) - beta / 3.0 * mean_phi).abs() <= 1e-8);
        for q in &eval.outputs.perturbation {
            prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

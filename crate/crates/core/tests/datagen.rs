use std::time::Instant;

use longace_core::datagen::{
    gen_semisynthetic, gen_synthetic, ground_truth_ace, initial_treatment_level, load_dataset, next_treatment_level,
    oracle_propensities, resimulate_factual, save_dataset, Dataset, DgpConfig, DgpKind, InterventionPlan,
    TreatmentMode,
};
use proptest::prelude::*;

const TAN_LIMIT: f64 = std::f64::consts::FRAC_PI_2 - 0.05;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn small_synthetic(seed: u64) -> DgpConfig {
    DgpConfig {
        n: 60,
        horizon: 8,
        p: 3,
        lag: 3,
        ..DgpConfig::synthetic().with_seed(seed)
    }
}

#[test]
fn synthetic_one_covariate_two_steps_matches_hand_recomputation() {
    let config = DgpConfig {
        n: 5,
        horizon: 2,
        p: 1,
        lag: 1,
        ..DgpConfig::synthetic().with_seed(11)
    };
    let data = gen_synthetic(&config).unwrap();
    let nb = data.noise.as_ref().unwrap();
    let w = &nb.weights;
    for (tr, rec) in data.trajectories.iter().zip(&nb.records) {
        // t = 1: no lags.
        let x1 = rec.eps_x[0][0].tanh();
        // The tan term needs X̄_0, which does not exist, so it is zero; Y_1 = 0.
        let a1 = u8::from(sigmoid(rec.eps_a[0]) > 0.5);
        let y2 = x1 + w.w[0] * (2.0 * a1 as f64 - 1.0) + rec.eps_y[0];
        // t = 2
        let x2 = (w.alpha[0] * x1 + w.beta[0] * w.gamma[0] * (2.0 * a1 as f64 - 1.0) + rec.eps_x[1][0]).tanh();
        let pi2 = sigmoid(x1.clamp(-TAN_LIMIT, TAN_LIMIT).tan() + y2 + rec.eps_a[1]);
        let a2 = u8::from(pi2 > 0.5);
        let y3 = x2 + w.w[0] * (2.0 * a2 as f64 - 1.0) + rec.eps_y[1];

        assert!((tr.x[0][0] - x1).abs() < 1e-15);
        assert!((tr.x[1][0] - x2).abs() < 1e-15);
        assert_eq!(tr.a, vec![a1, a2]);
        assert!((tr.y[0] - y2).abs() < 1e-14);
        assert!((tr.y[1] - y3).abs() < 1e-14);
    }
    assert_eq!(w.w, vec![1.0]);
}

#[test]
fn semisynthetic_matches_hand_recomputation() {
    let config = DgpConfig {
        n: 4,
        horizon: 3,
        lag: 2,
        ..DgpConfig::semi_synthetic().with_seed(5)
    };
    let data = gen_semisynthetic(&config).unwrap();
    let nb = data.noise.as_ref().unwrap();
    let w = &nb.weights;
    assert_eq!(w.c, vec![-0.5, 1.0 / 3.0]);
    let horizon: f64 = 3.0;
    for (tr, rec) in data.trajectories.iter().zip(&nb.records) {
        let xbar = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let bit = |a: u8| 2.0 * a as f64 - 1.0;
        let mut ell: f64 = horizon / 2.0;
        assert_eq!(ell, 1.5);

        // t = 1
        let x1: Vec<f64> = rec.eps_x[0].iter().map(|e| e.tanh()).collect();
        let a1 = u8::from(sigmoid(-(ell - horizon / 2.0).tanh() + rec.eps_a[0]) > 0.5);
        ell += 2.0 * (a1 as f64 - 1.0) * xbar(&x1) * 0.0f64.tanh();
        let y2 = rec.eps_y[0];
        // t = 2
        let x2: Vec<f64> = x1
            .iter()
            .zip(&rec.eps_x[1])
            .map(|(x, e)| (w.alpha[0] * x + w.beta[0] * w.gamma[0] * bit(a1) + e).tanh())
            .collect();
        let pi2 = sigmoid(w.c[0] * (xbar(&x1) + 0.0f64.tanh()) - (ell - horizon / 2.0).tanh() + rec.eps_a[1]);
        let a2 = u8::from(pi2 > 0.5);
        ell += 2.0 * (a2 as f64 - 1.0) * xbar(&x2) * y2.tanh();
        let u1 = xbar(&x1) * a1 as f64;
        let y3 = 5.0 * (w.c[0] * (u1.sin() + u1.cos()).tanh()) + rec.eps_y[1];
        // t = 3
        let x3: Vec<f64> = (0..x1.len())
            .map(|j| {
                (w.alpha[0] * x2[j]
                    + w.beta[0] * w.gamma[0] * bit(a2)
                    + w.alpha[1] * x1[j]
                    + w.beta[1] * w.gamma[1] * bit(a1)
                    + rec.eps_x[2][j])
                    .tanh()
            })
            .collect();
        let pi3 = sigmoid(
            w.c[0] * (xbar(&x2) + y2.tanh()) + w.c[1] * (xbar(&x1) + 0.0f64.tanh()) - (ell - horizon / 2.0).tanh()
                + rec.eps_a[2],
        );
        let a3 = u8::from(pi3 > 0.5);
        let u2 = xbar(&x2) * a2 as f64;
        let y4 = 5.0 * (w.c[0] * (u2.sin() + u2.cos()).tanh() + w.c[1] * (u1.sin() + u1.cos()).tanh()) + rec.eps_y[2];

        assert_eq!(tr.a, vec![a1, a2, a3]);
        for (got, want) in tr.x.iter().flatten().zip(x1.iter().chain(&x2).chain(&x3)) {
            assert!((got - want).abs() < 1e-14);
        }
        for (got, want) in tr.y.iter().zip([y2, y3, y4]) {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }
}

#[test]
fn treatment_level_starts_at_half_horizon() {
    assert_eq!(initial_treatment_level(15), 7.5);
}

#[test]
fn treated_step_leaves_level_unchanged() {
    for (xbar, y) in [(0.3, -1.2), (-0.9, 4.0), (0.0, 0.0)] {
        assert_eq!(next_treatment_level(2.25, 1, xbar, y), 2.25);
    }
    let moved = next_treatment_level(2.25, 0, 0.5, 1.0);
    assert!((moved - (2.25 - 1.0f64.tanh())).abs() < 1e-15);
}

#[test]
fn ranges_hold() {
    let data = gen_synthetic(&small_synthetic(3)).unwrap();
    for tr in &data.trajectories {
        assert!(tr.a.iter().all(|&a| a <= 1));
        assert!(tr.x.iter().flatten().all(|v| v.abs() < 1.0));
    }
    let semi = gen_semisynthetic(&DgpConfig {
        n: 30,
        ..DgpConfig::semi_synthetic()
    })
    .unwrap();
    assert!(semi
        .trajectories
        .iter()
        .all(|tr| tr.x.iter().flatten().all(|v| v.abs() < 1.0)));
}

#[test]
fn fixed_seed_is_bit_identical() {
    let a = gen_synthetic(&small_synthetic(9)).unwrap();
    let b = gen_synthetic(&small_synthetic(9)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.fingerprint(), b.fingerprint());
    let c = gen_synthetic(&small_synthetic(10)).unwrap();
    assert_ne!(a.fingerprint(), c.fingerprint());
}

#[test]
fn severed_treatment_has_zero_effect() {
    let config = DgpConfig {
        sever_treatment: true,
        ..small_synthetic(4)
    };
    let data = gen_synthetic(&config).unwrap();
    let ones = InterventionPlan::ones(8);
    let zeros = InterventionPlan::zeros(8);
    let alt = InterventionPlan::window(8, 2, 5);
    assert_eq!(ground_truth_ace(&data, ones.as_slice(), zeros.as_slice()).unwrap(), 0.0);
    assert_eq!(ground_truth_ace(&data, alt.as_slice(), zeros.as_slice()).unwrap(), 0.0);
}

#[test]
fn one_step_linear_effect_is_two() {
    let config = DgpConfig {
        n: 50,
        horizon: 1,
        p: 2,
        lag: 1,
        ..DgpConfig::synthetic().with_seed(8)
    };
    let data = gen_synthetic(&config).unwrap();
    let psi = ground_truth_ace(&data, &[1], &[0]).unwrap();
    assert!((psi - 2.0).abs() < 1e-12, "{psi}");
    let psi = ground_truth_ace(&data, &[0], &[1]).unwrap();
    assert!((psi + 2.0).abs() < 1e-12, "{psi}");
}

#[test]
fn factual_resimulation_is_bit_exact() {
    for config in [
        small_synthetic(1),
        DgpConfig {
            n: 40,
            ..DgpConfig::semi_synthetic()
        },
    ] {
        let data = longace_core::datagen::generate(&config).unwrap();
        let again = resimulate_factual(&data).unwrap();
        assert_eq!(again, data.trajectories);
    }
}

#[test]
fn randomized_oracle_propensities_are_half() {
    let config = DgpConfig {
        treatment: TreatmentMode::Randomized,
        ..small_synthetic(6)
    };
    let data = gen_synthetic(&config).unwrap();
    let props = oracle_propensities(&data).unwrap();
    assert!(props.iter().flatten().all(|&p| p == 0.5));
}

#[test]
fn oracle_propensities_match_empirical_frequencies() {
    // Bin the oracle propensities and compare against observed treatment
    // frequencies: a calibrated oracle gives matching averages.
    let config = DgpConfig {
        n: 3000,
        ..small_synthetic(12)
    };
    let data = gen_synthetic(&config).unwrap();
    let props = oracle_propensities(&data).unwrap();
    let (mut sum_p, mut sum_a, mut n) = (0.0, 0.0, 0.0);
    for (tr, pr) in data.trajectories.iter().zip(&props) {
        for (t, &pt) in pr.iter().enumerate().take(tr.horizon()) {
            if (0.2..0.8).contains(&pt) {
                sum_p += pt;
                sum_a += tr.a[t] as f64;
                n += 1.0;
            }
        }
    }
    assert!(n > 500.0);
    assert!(((sum_p - sum_a) / n).abs() < 0.03, "{} vs {}", sum_p / n, sum_a / n);
}

#[test]
fn oracle_requires_noise() {
    let mut data = gen_synthetic(&small_synthetic(1)).unwrap();
    data.noise = None;
    assert!(ground_truth_ace(&data, &[0; 8], &[1; 8]).is_err());
}

#[test]
fn save_load_round_trip_and_speed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let data = gen_synthetic(&DgpConfig::synthetic().with_seed(21)).unwrap();
    let started = Instant::now();
    save_dataset(&data, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(back, data);
    assert!(dir.path().join("data.noise.json").exists());
    assert!(elapsed.as_secs_f64() < 5.0, "{elapsed:?}");

    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 15_001);
    assert!(text.starts_with("id,t,x1,x2,x3,x4,x5,x6,a,y_next\n"));
}

#[test]
fn semisynthetic_rejects_synthetic_only_switches() {
    let config = DgpConfig {
        linear: true,
        ..DgpConfig::semi_synthetic()
    };
    assert!(gen_semisynthetic(&config).is_err());
    assert!(gen_synthetic(&DgpConfig::semi_synthetic()).is_err());
    assert_eq!(DgpConfig::semi_synthetic().kind, DgpKind::SemiSynthetic);
}

fn shared_dataset() -> &'static Dataset {
    use std::sync::OnceLock;
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| gen_synthetic(&small_synthetic(31)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_is_antisymmetric(a in proptest::collection::vec(0u8..=1, 8), b in proptest::collection::vec(0u8..=1, 8)) {
        let data = shared_dataset();
        let ab = ground_truth_ace(data, &a, &b).unwrap();
        let ba = ground_truth_ace(data, &b, &a).unwrap();
        prop_assert_eq!(ab, -ba);
        prop_assert_eq!(ground_truth_ace(data, &a, &a).unwrap(), 0.0);
    }
}

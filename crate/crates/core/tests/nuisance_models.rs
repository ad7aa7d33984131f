use mrsurv::nuisance::{
    fit_cox_breslow, fit_km, fit_oracle, kaplan_meier, ConditionalSurvivalModel, CoxModel,
    CoxOptions, FeatureMap, Role, WindowData, WindowRow,
};
use mrsurv::simulate::{generate, sample_subject, Dgp, TrialDgp, WindowLaw};
use mrsurv::StepSurvival;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Weibull};

fn row(subject: usize, history: Vec<f64>, x: f64, event: bool) -> WindowRow {
    WindowRow {
        subject,
        history,
        x,
        event,
        censored: !event,
        weight: 1.0,
    }
}

fn assert_valid_curve(c: &StepSurvival, start: f64) {
    assert_eq!(c.start(), start);
    assert_eq!(c.at(start), 1.0);
    let v = c.values();
    assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
    assert!(v.windows(2).all(|w| w[1] <= w[0]));
    assert!(c.jump_times().windows(2).all(|w| w[0] < w[1]));
    assert!(c.jump_times().iter().all(|&t| t > start));
}

#[test]
fn km_hand_example() {
    let km = kaplan_meier(
        0.0,
        &[
            (1.0, true, 1.0),
            (2.0, false, 1.0),
            (3.0, true, 1.0),
            (3.0, false, 1.0),
        ],
    );
    assert_eq!(km.at(1.0), 0.75);
    assert_eq!(km.at(2.5), 0.75);
    assert_eq!(km.at(3.0), 0.375);
}

#[test]
fn km_degenerate_cases() {
    let none = kaplan_meier(0.0, &[(1.0, false, 1.0), (2.0, false, 1.0)]);
    assert!(none.is_unit());
    let tied = kaplan_meier(
        0.0,
        &[
            (2.0, true, 1.0),
            (2.0, true, 1.0),
            (2.0, false, 1.0),
            (5.0, false, 1.0),
            (6.0, true, 1.0),
        ],
    );
    assert_eq!(tied.at(2.0), 1.0 - 2.0 / 5.0);
}

proptest! {
    #[test]
    fn km_without_censoring_is_the_empirical_survival(xs in prop::collection::vec(1u32..40, 1..60)) {
        let obs: Vec<(f64, bool, f64)> = xs.iter().map(|&x| (f64::from(x), true, 1.0)).collect();
        let km = kaplan_meier(0.0, &obs);
        let n = xs.len() as f64;
        for t in 0..=41 {
            let t = f64::from(t);
            let empirical = xs.iter().filter(|&&x| f64::from(x) > t).count() as f64 / n;
            prop_assert_eq!(km.at(t), empirical);
        }
    }
}

fn cox_window(n: usize, seed: u64) -> WindowData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|i| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2 = f64::from(u8::from(rng.gen_bool(0.4)));
            let t = -(rng.gen::<f64>().max(1e-300)).ln() / (0.05 * (0.5 * z1 - 0.7 * z2).exp());
            let c = rng.gen_range(0.0..40.0);
            let x = t.min(c).min(30.0);
            row(i, vec![z1, z2], x, t <= c && t <= 30.0)
        })
        .collect();
    WindowData::from_rows(0, 0.0, 30.0, rows)
}

#[test]
fn cox_score_matches_finite_differences_at_random_coefficients() {
    let data = cox_window(150, 3);
    let features = FeatureMap::all(2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    for _ in 0..20 {
        let beta = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let (_, score) = CoxModel::partial_likelihood(&data, Role::Event, &features, &beta);
        for j in 0..2 {
            let mut up = beta;
            let mut down = beta;
            up[j] += h;
            down[j] -= h;
            let fd = (CoxModel::partial_likelihood(&data, Role::Event, &features, &up).0
                - CoxModel::partial_likelihood(&data, Role::Event, &features, &down).0)
                / (2.0 * h);
            assert!(
                (fd - score[j]).abs() < 1e-6,
                "beta {beta:?} j {j}: fd {fd} score {}",
                score[j]
            );
        }
    }
}

#[test]
fn cox_recovers_coefficients_and_zero_score() {
    let data = cox_window(4000, 5);
    let m = fit_cox_breslow(
        &data,
        Role::Event,
        FeatureMap::all(2),
        &CoxOptions::default(),
    )
    .unwrap();
    let b = m.coefficients();
    assert!(
        (b[0] - 0.5).abs() < 0.1 && (b[1] + 0.7).abs() < 0.15,
        "{b:?}"
    );
    let (_, score) = CoxModel::partial_likelihood(&data, Role::Event, &FeatureMap::all(2), b);
    assert!(score.iter().all(|s| s.abs() < 1e-6));
}

#[test]
fn cox_with_zero_coefficients_is_the_baseline() {
    let data = cox_window(200, 8);
    let m = CoxModel::with_coefficients(&data, Role::Event, FeatureMap::all(2), &[0.0, 0.0]);
    let base = m.baseline();
    for h in [[0.3, 1.0], [-2.0, 0.0]] {
        assert_eq!(*m.predict(&h, 30.0).unwrap(), base);
    }
}

#[test]
fn censor_models_use_the_flipped_flag() {
    let rows = (0..30)
        .map(|i| row(i, vec![i as f64 / 10.0], 1.0 + i as f64 * 0.5, true))
        .collect();
    let data = WindowData::from_rows(0, 0.0, 30.0, rows);
    assert!(fit_km(&data, Role::Censor).unwrap().curve().is_unit());
    let cox = fit_cox_breslow(
        &data,
        Role::Censor,
        FeatureMap::all(1),
        &CoxOptions::default(),
    )
    .unwrap();
    assert!(cox.predict(&[1.0], 30.0).unwrap().is_unit());
    assert!(!fit_km(&data, Role::Event).unwrap().curve().is_unit());
}

#[test]
fn every_learner_predicts_valid_curves() {
    let data = generate(&TrialDgp { censoring: true }, 400, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..2 {
        let wd = WindowData::from_dataset(&data, k);
        let width = if k == 0 { 3 } else { 5 };
        let start = wd.start;
        let end = wd.end;
        for role in [Role::Event, Role::Censor] {
            let models: Vec<Box<dyn ConditionalSurvivalModel>> = vec![
                Box::new(fit_km(&wd, role).unwrap()),
                Box::new(
                    fit_cox_breslow(&wd, role, FeatureMap::all(width), &CoxOptions::default())
                        .unwrap(),
                ),
                Box::new(fit_oracle("trial", &wd, role).unwrap()),
            ];
            for _ in 0..100 {
                let h: Vec<f64> = (0..width)
                    .map(|j| {
                        if j == 1 || j == 4 {
                            f64::from(u8::from(rng.gen_bool(0.5)))
                        } else {
                            rng.sample(StandardNormal)
                        }
                    })
                    .collect();
                for m in &models {
                    assert_valid_curve(&m.predict(&h, end).unwrap(), start);
                }
            }
        }
    }
}

#[test]
fn oracle_matches_the_window_one_weibull() {
    let data = generate(&TrialDgp { censoring: true }, 300, 2);
    let wd = WindowData::from_dataset(&data, 0);
    let oracle = fit_oracle("trial", &wd, Role::Event).unwrap();
    let h = [-0.8, 0.0, 1.3];
    let scale = 30.0 + 2.0 * 0.8 + 1.3 * 1.3;
    let curve = oracle.predict(&h, 30.0).unwrap();
    assert_eq!(curve.at(0.0), 1.0);
    let tail = (-(30.0f64 / scale).powi(5)).exp();
    assert!((curve.at(30.0) - tail).abs() < 1e-14);
    for &g in oracle.grid().iter().filter(|&&g| g <= 30.0) {
        assert!((curve.at(g) - (-(g / scale).powi(5)).exp()).abs() < 1e-14);
    }
    assert!(fit_oracle("nope", &wd, Role::Event).is_err());
    assert!(oracle.predict(&[0.0; 2], 30.0).is_err());
}

/// Independent sampler built on `rand_distr::Weibull`, used to check the oracle curves.
fn reference_second_window_time(h: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let scale = 30.0 + 20.0 * h[4] + 2.0 * h[3].abs() + h[2] * h[2];
    30.0 + Weibull::new(scale, 3.0).unwrap().sample(rng)
}

#[test]
fn oracle_curves_match_empirical_conditional_survival() {
    let data = generate(&TrialDgp { censoring: true }, 500, 6);
    let wd = WindowData::from_dataset(&data, 1);
    let oracle = fit_oracle("trial", &wd, Role::Event).unwrap();
    let h = [0.4, 1.0, -0.6, 1.1, 0.0];
    let curve = oracle.predict(&h, 60.0).unwrap();
    let m = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws: Vec<f64> = (0..m)
        .map(|_| reference_second_window_time(&h, &mut rng))
        .collect();
    let grid = oracle.grid();
    for q in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let t = grid[((grid.len() - 1) as f64 * q) as usize];
        let empirical = draws.iter().filter(|&&d| d > t).count() as f64 / m as f64;
        let p = curve.at(t);
        let se = (p * (1.0 - p) / m as f64).sqrt().max(1e-12);
        assert!(
            (empirical - p).abs() < 3.0 * se + 1e-12,
            "t {t}: oracle {p} empirical {empirical}"
        );
    }
}

#[test]
fn generator_window_laws_match_an_independent_sampler() {
    let d = TrialDgp { censoring: true };
    let h = [1.2, 1.0, 0.5];
    let WindowLaw::Weibull { shape, scale, .. } = d.window_law(0, Role::Event, &h) else {
        panic!("weibull")
    };
    assert_eq!((shape, scale), (5.0, 30.0 + 20.0 + 2.4 + 0.25));
    let m = 100_000;
    let mut a = ChaCha8Rng::seed_from_u64(1);
    let mut b = ChaCha8Rng::seed_from_u64(2);
    let law = d.window_law(0, Role::Event, &h);
    let reference = Weibull::new(scale, shape).unwrap();
    for t in [20.0, 30.0, 45.0] {
        let ours = (0..m).filter(|_| law.sample(0.0, &mut a) > t).count() as f64 / m as f64;
        let theirs = (0..m).filter(|_| reference.sample(&mut b) > t).count() as f64 / m as f64;
        let se = (2.0 * ours * (1.0 - ours) / m as f64).sqrt().max(1e-9);
        assert!(
            (ours - theirs).abs() < 4.0 * se,
            "t {t}: {ours} vs {theirs}"
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let s = sample_subject(&d, &mut rng);
        assert!(s.c <= 60.0);
        if s.t > 30.0 {
            assert_eq!(s.covariates.len(), 2);
        }
    }
}

mod common;

use approx::assert_relative_eq;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secure_game::detection::CyberMode;
use secure_game::game::{self, HybridGameState, MixedStrategyProfile};
use secure_game::linalg::quad_form;

fn random_simplex(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    let v = DVector::from_fn(len, |_, _| -rng.random::<f64>().max(1e-300).ln());
    let s = v.sum();
    v / s
}

fn random_profile(rng: &mut ChaCha8Rng, m: usize, n: usize) -> MixedStrategyProfile {
    MixedStrategyProfile {
        f: [random_simplex(rng, m), random_simplex(rng, m), random_simplex(rng, m)],
        g: [random_simplex(rng, n), random_simplex(rng, n), random_simplex(rng, n)],
    }
}

#[test]
fn invariants_under_random_profiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for seed in 0..10 {
        let (model, initial) = common::toy_instance(seed);
        let (m, n) = (model.m(), model.n());
        for _ in 0..100 {
            let dist = random_simplex(&mut rng, 3);
            let state = HybridGameState::new(initial.window.clone(), [dist[0], dist[1], dist[2]]).unwrap();
            let profile = random_profile(&mut rng, m, n);
            let payoffs = game::build_stage_payoff(&model, &state.window).unwrap();
            assert!(payoffs.iter().all(|q| q.iter().all(|&x| x >= 0.0 && x.is_finite())));
            assert!(game::expected_stage_cost(&payoffs, &state.mode_dist, &profile) >= 0.0);

            let next = game::next_mode_distribution(&model, &state.mode_dist, &profile);
            assert!(next.iter().all(|&p| p >= 0.0));
            assert_relative_eq!(next.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(next[CyberMode::Safe.index()] + 1e-15 >= state.mode_dist[CyberMode::Safe.index()]);

            let updated = game::update_with_strategies(&model, &state, &profile).unwrap();
            assert_eq!(updated.mode_dist, next);
            assert_eq!(updated.stage, state.stage + 1);
            assert_eq!(updated.window.size(), state.window.size());
            checked += 1;
        }
    }
    assert_eq!(checked, 1000);
}

#[test]
fn total_payoff_is_nonnegative_and_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let (model, initial) = common::toy_instance(seed);
        let seq: Vec<_> = (0..5).map(|_| random_profile(&mut rng, model.m(), model.n())).collect();
        let eval = game::evaluate_total_payoff(&model, &initial, &seq).unwrap();
        assert_eq!(eval.stage_costs.len(), 5);
        assert!(eval.stage_costs.iter().all(|&c| c >= 0.0));
        assert_relative_eq!(eval.total, eval.stage_costs.iter().sum::<f64>(), max_relative = 1e-12);
        let safe: Vec<f64> = eval.mode_dists.iter().map(|d| d[0]).collect();
        assert!(safe.windows(2).all(|w| w[1] + 1e-15 >= w[0]));
    }
}

#[test]
fn safe_start_reduces_to_lqg() {
    for seed in 0..8 {
        let (model, initial) = common::toy_instance(seed);
        let start = HybridGameState::in_mode(initial.window.clone(), CyberMode::Safe);
        for j in 0..model.n() {
            let k_stages = 8;
            let seq: Vec<_> = (0..k_stages)
                .map(|_| {
                    random_profile(&mut ChaCha8Rng::seed_from_u64(seed), model.m(), model.n()).with_fixed_system(j)
                })
                .collect();
            let eval = game::evaluate_total_payoff(&model, &start, &seq).unwrap();

            let plant = &model.plant;
            let sub = &model.subsystems[j];
            let mut x = plant.x0_mean.clone();
            let mut pred = plant.x0_mean.clone();
            let energy = (&model.weights.u * &sub.watermark_cov).trace();
            for k in 0..k_stages {
                let y = &plant.c * &x;
                let filt = &pred + &sub.kalman_gain * (y - &plant.c * &pred);
                let u = &sub.controller_gain * &filt;
                let cost = quad_form(&filt, &model.weights.w) + quad_form(&u, &model.weights.u) + energy;
                assert!(
                    (eval.stage_costs[k] - cost).abs() <= 1e-9 * cost.max(1.0),
                    "seed {seed} j {j} k {k}"
                );
                assert_relative_eq!(eval.mode_dists[k][0], 1.0, epsilon = 1e-12);
                x = &plant.a * &x + &plant.b * &u;
                pred = &plant.a * &filt + &plant.b * &u;
            }
        }
    }
}

#[test]
fn false_alarm_pays_penalty_only() {
    let (model, initial) = common::toy_instance(2);
    let state = HybridGameState::in_mode(initial.window, CyberMode::FalseAlarm);
    let profile = MixedStrategyProfile::uniform(model.m(), model.n());
    let payoffs = game::build_stage_payoff(&model, &state.window).unwrap();
    assert_relative_eq!(
        game::expected_stage_cost(&payoffs, &state.mode_dist, &profile),
        model.p_f,
        epsilon = 1e-12
    );
    let next = game::next_mode_distribution(&model, &state.mode_dist, &profile);
    assert_eq!(next, [0.0, 1.0, 0.0]);
}

#[test]
fn malformed_inputs_are_rejected() {
    let (model, initial) = common::toy_instance(0);
    assert!(HybridGameState::new(initial.window.clone(), [0.5, 0.6, 0.0]).is_err());
    assert!(HybridGameState::new(initial.window.clone(), [-0.1, 1.1, 0.0]).is_err());
    let mut bad = MixedStrategyProfile::uniform(model.m(), model.n());
    bad.f[1] = DVector::from_vec(vec![0.7, 0.7]);
    assert!(bad.validate(model.m(), model.n()).is_err());
    assert!(game::update_with_strategies(&model, &initial, &bad).is_err());
    let short = MixedStrategyProfile::uniform(model.m() + 1, model.n());
    assert!(short.validate(model.m(), model.n()).is_err());

    let mut attacks = model.attacks.clone();
    attacks.swap(0, 1);
    assert!(secure_game::game::GameModel::new(
        model.plant.clone(),
        model.subsystems.clone(),
        attacks,
        model.weights.clone(),
        model.p_f,
        model.kernel.clone(),
    )
    .is_err());
}

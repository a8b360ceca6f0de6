mod common;

use approx::assert_relative_eq;
use nalgebra::DVector;
use secure_game::detection::TransitionKernel;
use secure_game::error::GameError;
use secure_game::game::{self, MixedStrategyProfile};
use secure_game::harness::{self, Scenario};
use secure_game::matrix_game;
use secure_game::moving_horizon::{self, convergence_diagnostic};
use secure_game::suboptimal::{self, enumerate_pure_histories, robust_value_iteration, upper_bound_certificate};

#[test]
fn moving_horizon_solve_count() {
    let (model, initial) = common::toy_instance(1);
    let mn = model.m() * model.n();
    for k in [1, 2, 5, 9] {
        let res = moving_horizon::run_moving_horizon(&model, &initial, k).unwrap();
        assert_eq!(res.stages.len(), k);
        assert_eq!(res.solve_count, (k - 1) * mn + 3 * k);
    }
}

#[test]
fn moving_horizon_cost_matches_evaluation() {
    for seed in 0..5 {
        let (model, initial) = common::toy_instance(seed);
        let res = moving_horizon::run_moving_horizon(&model, &initial, 6).unwrap();
        let eval = game::evaluate_total_payoff(&model, &initial, &res.strategies()).unwrap();
        assert_relative_eq!(res.total_expected_cost(), eval.total, max_relative = 1e-12);
        for (stage, dist) in res.stages.iter().zip(&eval.mode_dists) {
            assert_eq!(&stage.mode_dist, dist);
        }
    }
}

#[test]
fn suboptimal_solve_count() {
    let (model, initial) = common::toy_instance(2);
    let mn = model.m() * model.n();
    for k in 1..=4 {
        let res = robust_value_iteration(&model, &initial, k, u64::MAX).unwrap();
        let expected: usize = (0..k).map(|d| 3 * mn.pow(d as u32)).sum();
        assert_eq!(res.solve_count, expected);
        assert_eq!(res.v_bar.len(), k);
        assert_eq!(res.strategies.len(), k);
        assert_relative_eq!(suboptimal::required_nodes(mn, k), (expected / 3) as f64);
    }
}

#[test]
fn single_stage_algorithms_agree_with_direct_solve() {
    for seed in 0..5 {
        let (model, initial) = common::toy_instance(seed);
        let payoffs = game::build_stage_payoff(&model, &initial.window).unwrap();
        let direct: Vec<f64> = payoffs
            .iter()
            .map(|q| matrix_game::solve_zero_sum(q).unwrap().value)
            .collect();
        let mh = moving_horizon::run_moving_horizon(&model, &initial, 1).unwrap();
        let sub = robust_value_iteration(&model, &initial, 1, 10).unwrap();
        for (l, &value) in direct.iter().enumerate() {
            assert_relative_eq!(mh.stages[0].values[l], value, max_relative = 1e-12);
            assert_relative_eq!(sub.v_bar[0][l], value, max_relative = 1e-12);
        }
    }
}

#[test]
fn enumeration_count_and_order() {
    let (model, initial) = common::toy_instance(3);
    let histories = enumerate_pure_histories(&model, &initial.window, 3, 1_000).unwrap();
    assert_eq!(histories.len(), 16);
    assert_eq!(histories[0].actions, vec![(0, 0), (0, 0)]);
    assert_eq!(histories[1].actions, vec![(0, 0), (0, 1)]);
    assert_eq!(histories[15].actions, vec![(1, 1), (1, 1)]);
    assert_eq!(
        enumerate_pure_histories(&model, &initial.window, 1, 1).unwrap().len(),
        1
    );
    assert!(matches!(
        enumerate_pure_histories(&model, &initial.window, 3, 15),
        Err(GameError::BudgetExceeded { .. })
    ));
}

#[test]
fn budget_exceeded_on_long_horizon() {
    let mut cfg = harness::load_scenario(&common::fixture("batch_reactor_k6.json")).unwrap();
    cfg.k = 50;
    let kernel = TransitionKernel::from_detection(5, 2, |_, _| [0.0, 1.0, 0.0]);
    let scn = Scenario::with_kernel(&cfg, kernel).unwrap();
    assert_eq!((scn.model.m(), scn.model.n()), (5, 2));
    let err = robust_value_iteration(&scn.model, &scn.initial, 50, suboptimal::DEFAULT_BUDGET).unwrap_err();
    match err {
        GameError::BudgetExceeded { required, budget } => {
            assert!(required > 1e48);
            assert_eq!(budget, suboptimal::DEFAULT_BUDGET);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn convergence_diagnostic_tracks_drift() {
    let (model, initial) = common::toy_instance(4);
    let mut res = moving_horizon::run_moving_horizon(&model, &initial, 6).unwrap();
    let first = res.stages[0].clone();
    for stage in &mut res.stages {
        stage.profile = first.profile.clone();
        stage.q = first.q.clone();
    }
    let report = convergence_diagnostic(&res, 10, 1e-9);
    assert!(report.converged);
    assert_eq!(report.strategy_drift, 0.0);

    let n = model.n();
    res.stages[3].profile.g[1] = DVector::from_fn(n, |j, _| if j == 0 { 1.0 } else { 0.0 });
    let drift = (&res.stages[3].profile.g[1] - &first.profile.g[1]).amax();
    let report = convergence_diagnostic(&res, 10, 1e-9);
    assert_eq!(report.converged, drift <= 1e-9);
    assert_relative_eq!(report.strategy_drift, drift);

    // the terminal stage is excluded
    let mut res2 = res.clone();
    res2.stages[3] = first.clone();
    let last = res2.stages.len() - 1;
    res2.stages[last].profile = MixedStrategyProfile::uniform(model.m(), n);
    assert!(convergence_diagnostic(&res2, 10, 1e-9).converged);
}

#[test]
fn certificate_logic() {
    assert!(upper_bound_certificate(10.0, &[9.0, 10.0, 10.0 + 1e-10]));
    assert!(!upper_bound_certificate(10.0, &[9.0, 10.1]));
    assert!(upper_bound_certificate(0.0, &[]));
}

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secure_game::control::{LqgWeights, PlantModel};
use secure_game::detection::{CyberMode, TransitionKernel};
use secure_game::game::{self, GameModel, HybridGameState, MixedStrategyProfile};
use secure_game::matrix_game;
use secure_game::sim::{AttackAction, EstimateWindow, Subsystem};

/// Random two-state, single-input, single-output instance with two attacker
/// actions (NoAttack plus a replay or an injection) and two subsystems that
/// differ in both feedback gain and watermark.
pub fn toy_instance(seed: u64) -> (GameModel, HybridGameState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let a = DMatrix::from_row_slice(2, 2, &[u(0.6, 1.2), u(-0.5, 0.5), u(-0.5, 0.5), u(0.3, 1.0)]);
    let b = DMatrix::from_row_slice(2, 1, &[u(0.5, 1.5), u(-0.5, 0.5)]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, u(-0.5, 0.5)]);
    let x0 = DVector::from_vec(vec![u(-2.0, 2.0), u(-2.0, 2.0)]);
    let plant = PlantModel::new(
        a,
        b,
        c,
        DMatrix::identity(2, 2) * u(0.01, 0.2),
        DMatrix::identity(1, 1) * u(0.01, 0.2),
        x0.clone(),
        DMatrix::identity(2, 2) * 0.1,
    )
    .unwrap();
    let weights = LqgWeights::identity(2, 1);
    let alt = LqgWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1) * u(0.2, 5.0)).unwrap();
    let s1 = Subsystem::lqg(&plant, &weights, DMatrix::zeros(1, 1), 0.05, 0).unwrap();
    let mut s2 = Subsystem::lqg(&plant, &alt, DMatrix::identity(1, 1) * u(0.05, 0.5), 0.05, 0).unwrap();
    s2.detector = s1.detector.clone();
    let attack = if u(0.0, 1.0) < 0.5 {
        AttackAction::Replay {
            delay: 1 + (u(0.0, 3.0) as usize),
        }
    } else {
        AttackAction::Inject(DVector::from_vec(vec![u(-2.0, 2.0)]))
    };
    let p1 = u(0.0, 0.3);
    let p2 = u(0.2, 0.9);
    let kernel = TransitionKernel::from_detection(2, 2, |i, j| match (i, j) {
        (0, _) => [0.0, 0.95, 0.05],
        (_, 0) => [p1, 1.0 - p1, 0.0],
        _ => [p2, 1.0 - p2, 0.0],
    });
    let p_f = u(0.5, 10.0);
    let model = GameModel::new(
        plant.clone(),
        vec![s1, s2],
        vec![AttackAction::NoAttack, attack],
        weights,
        p_f,
        kernel,
    )
    .unwrap();
    let window = EstimateWindow::constant(&plant, &x0, 3);
    (model, HybridGameState::in_mode(window, CyberMode::NoDetection))
}

/// Two-stage game value from a state concentrated on one mode, searching
/// stage-1 strategies of that mode on a `points`-point grid and solving the
/// stage-2 games exactly at the mixed window.
pub fn grid_oracle_two_stage(model: &GameModel, initial: &HybridGameState, points: usize) -> f64 {
    assert_eq!((model.m(), model.n()), (2, 2));
    let r1 = game::build_stage_payoff(model, &initial.window).unwrap();
    let mut best_g = f64::INFINITY;
    for tg in 0..points {
        let gq = tg as f64 / (points - 1) as f64;
        let mut worst_f = f64::NEG_INFINITY;
        for tf in 0..points {
            let fp = tf as f64 / (points - 1) as f64;
            let f = DVector::from_vec(vec![fp, 1.0 - fp]);
            let g = DVector::from_vec(vec![gq, 1.0 - gq]);
            let profile = MixedStrategyProfile {
                f: [f.clone(), f.clone(), f],
                g: [g.clone(), g.clone(), g],
            };
            let stage1 = game::expected_stage_cost(&r1, &initial.mode_dist, &profile);
            let next = game::update_with_strategies(model, initial, &profile).unwrap();
            let r2 = game::build_stage_payoff(model, &next.window).unwrap();
            let stage2: f64 = (0..3)
                .filter(|&h| next.mode_dist[h] > 0.0)
                .map(|h| next.mode_dist[h] * matrix_game::solve_zero_sum(&r2[h]).unwrap().value)
                .sum();
            worst_f = worst_f.max(stage1 + stage2);
        }
        best_g = best_g.min(worst_f);
    }
    best_g
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

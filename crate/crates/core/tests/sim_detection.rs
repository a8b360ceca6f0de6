use nalgebra::{DMatrix, DVector};
use secure_game::control::{self, LqgWeights, PlantModel};
use secure_game::detection::{self, CyberMode, KernelConfig, TransitionKernel};
use secure_game::sim::{AttackAction, EstimateWindow, Subsystem};

fn reactor() -> PlantModel {
    let (a, b, c) = control::batch_reactor_continuous();
    let (ad, bd) = control::discretize_zoh(&a, &b, 0.1).unwrap();
    PlantModel::new(
        ad,
        bd,
        c,
        DMatrix::identity(4, 4),
        DMatrix::identity(2, 2),
        DVector::zeros(4),
        DMatrix::identity(4, 4),
    )
    .unwrap()
}

fn subsystem(plant: &PlantModel, sigma2: f64) -> Subsystem {
    Subsystem::lqg(
        plant,
        &LqgWeights::identity(4, 2),
        DMatrix::identity(2, 2) * sigma2,
        0.05,
        0,
    )
    .unwrap()
}

fn config(trials: usize, seed: u64) -> KernelConfig {
    KernelConfig {
        trials,
        seed,
        warmup_steps: 60,
        detect_steps: 9,
    }
}

#[test]
fn attack_free_alarm_rate_is_alpha() {
    let plant = reactor();
    let window = EstimateWindow::constant(&plant, &DVector::zeros(4), 12);
    let cfg = config(20_000, 5);
    let rate = detection::alarm_rate(
        &plant,
        &subsystem(&plant, 0.0),
        &AttackAction::NoAttack,
        &window,
        &cfg,
        0,
    )
    .unwrap();
    let se = (0.05f64 * 0.95 / 20_000.0).sqrt();
    assert!((rate - 0.05).abs() <= 4.0 * se, "rate {rate}");
}

#[test]
fn unwatermarked_replay_is_stealthy() {
    let plant = reactor();
    let window = EstimateWindow::constant(&plant, &DVector::zeros(4), 12);
    let cfg = config(20_000, 9);
    let rate = detection::alarm_rate(
        &plant,
        &subsystem(&plant, 0.0),
        &AttackAction::Replay { delay: 10 },
        &window,
        &cfg,
        1,
    )
    .unwrap();
    assert!((rate - 0.05).abs() <= 0.01, "rate {rate}");
}

#[test]
fn watermark_raises_replay_detection() {
    let plant = reactor();
    let window = EstimateWindow::constant(&plant, &DVector::zeros(4), 12);
    let cfg = config(8_000, 13);
    let rates: Vec<f64> = [0.0, 1.0, 5.0, 20.0]
        .iter()
        .map(|&s2| {
            detection::alarm_rate(
                &plant,
                &subsystem(&plant, s2),
                &AttackAction::Replay { delay: 10 },
                &window,
                &cfg,
                2,
            )
            .unwrap()
        })
        .collect();
    for pair in rates.windows(2) {
        assert!(pair[1] + 0.01 >= pair[0], "rates {rates:?}");
    }
    assert!(rates[3] > rates[0] + 0.1, "rates {rates:?}");
}

fn kernel(seed: u64) -> TransitionKernel {
    let plant = reactor();
    let subs = vec![subsystem(&plant, 0.0), subsystem(&plant, 5.0)];
    let attacks = vec![
        AttackAction::NoAttack,
        AttackAction::Replay { delay: 5 },
        AttackAction::Inject(DVector::from_vec(vec![0.0, 10.0])),
    ];
    let window = EstimateWindow::constant(&plant, &DVector::from_element(4, 1.0), 6);
    let cfg = KernelConfig {
        trials: 2_000,
        seed,
        warmup_steps: 0,
        detect_steps: 1,
    };
    detection::estimate_transition_kernel(&plant, &subs, &attacks, &window, &cfg).unwrap()
}

#[test]
fn kernel_is_reproducible_and_seeded() {
    let a = kernel(1);
    assert_eq!(a, kernel(1));
    assert_ne!(a, kernel(2));
    a.validate().unwrap();
    for j in 0..2 {
        assert_eq!(a.row(0, j, CyberMode::NoDetection), [0.0, 0.95, 0.05]);
        assert_eq!(a.row(1, j, CyberMode::Safe), [1.0, 0.0, 0.0]);
        assert_eq!(a.row(1, j, CyberMode::FalseAlarm), [0.0, 1.0, 0.0]);
    }
    let bias_rate = a.row(2, 0, CyberMode::NoDetection)[0];
    assert!(bias_rate > 0.5, "injection detected at {bias_rate}");
}

#[test]
fn kernel_csv_round_trip_is_exact() {
    let k = kernel(4);
    let mut buf = Vec::new();
    k.write_csv(&mut buf).unwrap();
    let back = TransitionKernel::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, k);
}

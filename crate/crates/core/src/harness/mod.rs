//! Scenario loading, experiment orchestration and plot-data emission.

pub mod bench;
pub mod config;
pub mod experiment;
pub mod output;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::control;
use crate::detection::{self, KernelConfig, TransitionKernel};
use crate::error::GameError;
use crate::game::{GameModel, HybridGameState};
use crate::sim::{AttackAction, EstimateWindow, Subsystem};

pub use bench::{run_scaling_benchmark, ScalingRow};
pub use config::{load_scenario, parse_scenario, AlgorithmChoice, AttackSchedule, ScenarioConfig};
pub use experiment::{run_comparison, PolicyReport, RunReport};
pub use output::emit_plot_data;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Game(#[from] GameError),
}

impl HarnessError {
    /// Process exit code: 2 for bad input, 3 for a budget overrun.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::Validation(_) => 2,
            HarnessError::Game(GameError::BudgetExceeded { .. }) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

/// Game model and initial state built from a scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: GameModel,
    pub initial: HybridGameState,
    /// Steady-state per-stage cost of subsystem 1 without attacks.
    pub nominal_cost: f64,
}

impl Scenario {
    /// Builds subsystems, the attack grid, `p_f` and the kernel (from the
    /// cache when one is configured and present).
    pub fn build(config: &ScenarioConfig) -> HarnessResult<Self> {
        let (model, nominal_cost) = base_model(config)?;
        let window = initial_window(config);
        let kernel = match &config.kernel.cache {
            Some(path) if path.exists() => {
                let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
                let kernel = TransitionKernel::read_csv(BufReader::new(file))?;
                if kernel.dims() != (model.m(), model.n()) {
                    return Err(HarnessError::Validation(vec![format!(
                        "kernel cache {} is {:?}, scenario needs {:?}",
                        path.display(),
                        kernel.dims(),
                        (model.m(), model.n())
                    )]));
                }
                kernel
            }
            cache => {
                let kernel = estimate_kernel(config, &model, &window)?;
                if let Some(path) = cache {
                    write_kernel(&kernel, path)?;
                }
                kernel
            }
        };
        let model = model.with_kernel(kernel)?;
        let initial = HybridGameState::in_mode(window, config.initial_mode);
        Ok(Self {
            config: config.clone(),
            model,
            initial,
            nominal_cost,
        })
    }

    /// Like [`Scenario::build`] but with a kernel supplied directly.
    pub fn with_kernel(config: &ScenarioConfig, kernel: TransitionKernel) -> HarnessResult<Self> {
        let (model, nominal_cost) = base_model(config)?;
        let model = model.with_kernel(kernel)?;
        let initial = HybridGameState::in_mode(initial_window(config), config.initial_mode);
        Ok(Self {
            config: config.clone(),
            model,
            initial,
            nominal_cost,
        })
    }
}

pub fn write_kernel(kernel: &TransitionKernel, path: &std::path::Path) -> HarnessResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    kernel
        .write_csv(BufWriter::new(file))
        .map_err(|e| HarnessError::io(path, e))
}

pub fn subsystems(config: &ScenarioConfig) -> HarnessResult<Vec<Subsystem>> {
    let p = config.plant.input_dim();
    let kalman = control::kalman_gain(&config.plant)?;
    let l = control::lqr_gain(&config.plant, &config.weights)?;
    config
        .watermark_variances
        .iter()
        .map(|&s2| {
            Subsystem::from_design(
                &kalman,
                l.clone(),
                DMatrix::identity(p, p) * s2,
                config.alpha,
                config.detector_window,
            )
            .map_err(HarnessError::from)
        })
        .collect()
}

/// `NoAttack`, then one replay per grid delay, then one injection per bias.
pub fn attack_grid(config: &ScenarioConfig) -> Vec<AttackAction> {
    std::iter::once(AttackAction::NoAttack)
        .chain(
            config
                .replay_steps()
                .into_iter()
                .map(|delay| AttackAction::Replay { delay }),
        )
        .chain(config.injection_grid.iter().cloned().map(AttackAction::Inject))
        .collect()
}

pub fn initial_window(config: &ScenarioConfig) -> EstimateWindow {
    EstimateWindow::constant(&config.plant, &config.plant.x0_mean, config.t)
}

fn base_model(config: &ScenarioConfig) -> HarnessResult<(GameModel, f64)> {
    let subsystems = subsystems(config)?;
    let attacks = attack_grid(config);
    let kalman = control::kalman_gain(&config.plant)?;
    let nominal_cost = control::steady_state_stage_cost(
        &config.plant,
        &config.weights,
        &kalman,
        &subsystems[0].controller_gain,
        &subsystems[0].watermark_cov,
    )?;
    let p_f = config.p_f.unwrap_or(config.p_f_multiplier * nominal_cost);
    let (m, n) = (attacks.len(), subsystems.len());
    let placeholder = TransitionKernel::from_detection(m, n, |_, _| [0.0, 1.0, 0.0]);
    let model = GameModel::new(
        config.plant.clone(),
        subsystems,
        attacks,
        config.weights.clone(),
        p_f,
        placeholder,
    )?;
    Ok((model, nominal_cost))
}

fn estimate_kernel(
    config: &ScenarioConfig,
    model: &GameModel,
    window: &EstimateWindow,
) -> HarnessResult<TransitionKernel> {
    let kc = KernelConfig {
        trials: config.kernel.trials,
        seed: config.seed,
        warmup_steps: config.kernel.warmup_steps,
        detect_steps: config.kernel.detect_steps,
    };
    Ok(detection::estimate_transition_kernel(
        &model.plant,
        &model.subsystems,
        &model.attacks,
        window,
        &kc,
    )?)
}

/// The attack the rollouts play at stage `k`, if any.
pub fn scheduled_attack(config: &ScenarioConfig, k: usize) -> AttackAction {
    let t = k as f64 * config.ts;
    match &config.attack_schedule {
        AttackSchedule::None => AttackAction::NoAttack,
        AttackSchedule::Replay { onset_s, window_s } => {
            if t + 1e-9 >= *onset_s {
                AttackAction::Replay {
                    delay: crate::sim::seconds_to_steps(*window_s, config.ts),
                }
            } else {
                AttackAction::NoAttack
            }
        }
        AttackSchedule::Inject { onset_s, end_s, bias } => {
            let active = t + 1e-9 >= *onset_s && end_s.is_none_or(|e| t <= e + 1e-9);
            if active {
                AttackAction::Inject(DVector::from_vec(bias.clone()))
            } else {
                AttackAction::NoAttack
            }
        }
    }
}

/// Grid index of the scheduled attack at stage `k` after classification.
pub fn classified_attack(config: &ScenarioConfig, k: usize) -> usize {
    let n_replay = config.replay_grid_s.len();
    match scheduled_attack(config, k) {
        AttackAction::NoAttack => 0,
        AttackAction::Replay { delay } => {
            crate::sim::classify_replay(delay as f64 * config.ts, &config.replay_grid_s).map_or(0, |i| i + 1)
        }
        AttackAction::Inject(b) => {
            crate::sim::classify_injection(&b, &config.injection_grid).map_or(0, |i| i + 1 + n_replay)
        }
    }
}

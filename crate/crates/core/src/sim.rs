//! Closed-loop stage dynamics under sensor attacks, and classification of
//! observed attacks onto the discrete action grids.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::control::{self, KalmanDesign, LqgWeights, PlantModel};
use crate::detection::DetectorSpec;
use crate::error::{GameError, Result};
use crate::linalg;

/// One attacker action on the sensor channel.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackAction {
    NoAttack,
    /// Replay the measurements delivered `delay` steps ago.
    Replay {
        delay: usize,
    },
    /// Add a bias to the clean measurement.
    Inject(DVector<f64>),
}

impl AttackAction {
    pub fn is_attack(&self) -> bool {
        !matches!(self, AttackAction::NoAttack)
    }

    pub fn label(&self) -> String {
        match self {
            AttackAction::NoAttack => "none".into(),
            AttackAction::Replay { delay } => format!("replay{delay}"),
            AttackAction::Inject(b) => format!(
                "inject({})",
                b.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
            ),
        }
    }
}

/// One controller/estimator/detector combination the system may switch to.
#[derive(Debug, Clone)]
pub struct Subsystem {
    pub controller_gain: DMatrix<f64>,
    pub watermark_cov: DMatrix<f64>,
    pub kalman_gain: DMatrix<f64>,
    pub detector: DetectorSpec,
    watermark_factor: DMatrix<f64>,
}

impl Subsystem {
    pub fn new(
        controller_gain: DMatrix<f64>,
        watermark_cov: DMatrix<f64>,
        kalman_gain: DMatrix<f64>,
        detector: DetectorSpec,
    ) -> Result<Self> {
        if !control::is_psd(&watermark_cov) {
            return Err(GameError::InvalidArgument(
                "watermark covariance must be positive semidefinite".into(),
            ));
        }
        if watermark_cov.nrows() != controller_gain.nrows() {
            return Err(GameError::DimensionMismatch(format!(
                "watermark covariance {:?} vs controller gain {:?}",
                watermark_cov.shape(),
                controller_gain.shape()
            )));
        }
        let watermark_factor = linalg::psd_factor(&watermark_cov);
        Ok(Self {
            controller_gain,
            watermark_cov,
            kalman_gain,
            detector,
            watermark_factor,
        })
    }

    /// Steady-state LQG subsystem with an optional watermark.
    pub fn lqg(
        plant: &PlantModel,
        weights: &LqgWeights,
        watermark_cov: DMatrix<f64>,
        false_alarm_rate: f64,
        window_t1: usize,
    ) -> Result<Self> {
        let kalman = control::kalman_gain(plant)?;
        let l = control::lqr_gain(plant, weights)?;
        Self::from_design(&kalman, l, watermark_cov, false_alarm_rate, window_t1)
    }

    pub fn from_design(
        kalman: &KalmanDesign,
        controller_gain: DMatrix<f64>,
        watermark_cov: DMatrix<f64>,
        false_alarm_rate: f64,
        window_t1: usize,
    ) -> Result<Self> {
        let detector = DetectorSpec::new(false_alarm_rate, kalman.innovation_cov.clone(), window_t1)?;
        Self::new(controller_gain, watermark_cov, kalman.gain.clone(), detector)
    }

    fn check(&self, plant: &PlantModel) -> Result<()> {
        let (n, p, m) = (plant.state_dim(), plant.input_dim(), plant.output_dim());
        if self.controller_gain.shape() != (p, n) || self.kalman_gain.shape() != (n, m) {
            return Err(GameError::DimensionMismatch(format!(
                "subsystem gains L {:?}, K {:?} for plant n={n}, p={p}, m={m}",
                self.controller_gain.shape(),
                self.kalman_gain.shape()
            )));
        }
        Ok(())
    }

    pub fn sample_watermark<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(self.watermark_factor.ncols(), |_, _| rng.sample(StandardNormal));
        &self.watermark_factor * xi
    }
}

/// Gaussian noise generators for a plant.
#[derive(Debug, Clone)]
pub struct PlantNoise {
    process: DMatrix<f64>,
    measurement: DMatrix<f64>,
    initial: DMatrix<f64>,
}

impl PlantNoise {
    pub fn new(plant: &PlantModel) -> Self {
        Self {
            process: linalg::psd_factor(&plant.process_noise),
            measurement: linalg::psd_factor(&plant.measurement_noise),
            initial: linalg::psd_factor(&plant.x0_cov),
        }
    }

    fn draw<R: Rng + ?Sized>(factor: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(factor.ncols(), |_, _| rng.sample(StandardNormal));
        factor * xi
    }

    pub fn process<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        Self::draw(&self.process, rng)
    }

    pub fn measurement<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        Self::draw(&self.measurement, rng)
    }

    pub fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        Self::draw(&self.initial, rng)
    }
}

/// How to treat the random terms of a step.
pub enum NoiseMode<'a, R: Rng + ?Sized> {
    /// Every noise term at its mean.
    Expectation,
    Sample {
        noise: &'a PlantNoise,
        rng: &'a mut R,
    },
}

impl<R: Rng + ?Sized> NoiseMode<'_, R> {
    pub fn expectation() -> Self {
        NoiseMode::Expectation
    }
}

/// Sliding window of the closed loop: the last `T + 1` one-step predictions
/// `x̂_{t|t−1}` (the newest is the current one), the last `T + 1` delivered
/// measurements (the replay record), the true state and its clean
/// measurement at the current step.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateWindow {
    pub estimates: VecDeque<DVector<f64>>,
    pub outputs: VecDeque<DVector<f64>>,
    pub state: DVector<f64>,
    pub output: DVector<f64>,
}

impl EstimateWindow {
    /// Window of a loop resting at `x0`: every prediction equals `x0` and
    /// every recorded measurement equals `C x0`.
    pub fn constant(plant: &PlantModel, x0: &DVector<f64>, t: usize) -> Self {
        let y0 = &plant.c * x0;
        Self {
            estimates: std::iter::repeat_n(x0.clone(), t + 1).collect(),
            outputs: std::iter::repeat_n(y0.clone(), t + 1).collect(),
            state: x0.clone(),
            output: y0,
        }
    }

    pub fn size(&self) -> usize {
        self.estimates.len() - 1
    }

    /// Current prediction `x̂_{k|k−1}`.
    pub fn prediction(&self) -> &DVector<f64> {
        self.estimates.back().expect("window is never empty")
    }

    /// Delivered measurement `delay` steps back.
    pub fn recorded(&self, delay: usize) -> Result<&DVector<f64>> {
        if delay == 0 || delay > self.outputs.len() {
            return Err(GameError::InsufficientHistory {
                delay,
                available: self.outputs.len(),
            });
        }
        Ok(&self.outputs[self.outputs.len() - delay])
    }

    /// Slides the window forward by the step in `res`.
    pub fn advance(&mut self, res: &StageDynamicsResult) {
        self.estimates.pop_front();
        self.estimates.push_back(res.next_prediction.clone());
        self.outputs.pop_front();
        self.outputs.push_back(res.delivered_output.clone());
        self.state = res.next_true_state.clone();
        self.output = res.next_clean_output.clone();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageDynamicsResult {
    pub next_true_state: DVector<f64>,
    pub next_prediction: DVector<f64>,
    pub filtered_estimate: DVector<f64>,
    /// Applied input, including any watermark sample.
    pub control: DVector<f64>,
    /// Residual of the next measurement under the same attack,
    /// `z_{k+1} = y'_{k+1} − C x̂_{k+1|k}`.
    pub residual: DVector<f64>,
    pub delivered_output: DVector<f64>,
    pub next_clean_output: DVector<f64>,
}

/// Measurement seen by the estimator under `action`.
pub fn apply_attack(
    action: &AttackAction,
    window: &EstimateWindow,
    clean_output: &DVector<f64>,
) -> Result<DVector<f64>> {
    match action {
        AttackAction::NoAttack => Ok(clean_output.clone()),
        AttackAction::Inject(bias) => {
            if bias.len() != clean_output.len() {
                return Err(GameError::DimensionMismatch(format!(
                    "injection of length {} on {} outputs",
                    bias.len(),
                    clean_output.len()
                )));
            }
            Ok(clean_output + bias)
        }
        AttackAction::Replay { delay } => window.recorded(*delay).cloned(),
    }
}

/// Advances the loop by one step.
pub fn step_dynamics<R: Rng + ?Sized>(
    plant: &PlantModel,
    subsystem: &Subsystem,
    action: &AttackAction,
    window: &EstimateWindow,
    noise: &mut NoiseMode<'_, R>,
) -> Result<StageDynamicsResult> {
    subsystem.check(plant)?;
    let delivered = apply_attack(action, window, &window.output)?;
    let prediction = window.prediction();
    let filtered = prediction + &subsystem.kalman_gain * (&delivered - &plant.c * prediction);
    let mut control = &subsystem.controller_gain * &filtered;
    let mut next_state = &plant.a * &window.state;
    let next_clean_output;
    if let NoiseMode::Sample { noise, rng } = noise {
        control += subsystem.sample_watermark(*rng);
        next_state += &plant.b * &control + noise.process(*rng);
        next_clean_output = &plant.c * &next_state + noise.measurement(*rng);
    } else {
        next_state += &plant.b * &control;
        next_clean_output = &plant.c * &next_state;
    }
    let next_prediction = &plant.a * &filtered + &plant.b * &control;

    // the replay record seen at the next step includes this delivery
    let residual = {
        let next_delivered = match action {
            AttackAction::Replay { delay } => {
                if *delay == 1 {
                    delivered.clone()
                } else {
                    window.recorded(delay - 1)?.clone()
                }
            }
            other => apply_attack(other, window, &next_clean_output)?,
        };
        next_delivered - &plant.c * &next_prediction
    };

    Ok(StageDynamicsResult {
        next_true_state: next_state,
        next_prediction,
        filtered_estimate: filtered,
        control,
        residual,
        delivered_output: delivered,
        next_clean_output,
    })
}

/// Replay grid index closest to `t_a` seconds; ties go to the smaller index.
pub fn classify_replay(t_a: f64, grid: &[f64]) -> Option<usize> {
    nearest(grid.iter().map(|&t| (t_a - t).abs()))
}

/// Injection grid index closest in Euclidean norm; ties go to the smaller
/// index.
pub fn classify_injection(y_a: &DVector<f64>, grid: &[DVector<f64>]) -> Option<usize> {
    nearest(grid.iter().map(|g| (y_a - g).norm()))
}

fn nearest(distances: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, d) in distances.enumerate() {
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best.map(|(k, _)| k)
}

/// Independent random stream for the trajectory identified by `keys` under
/// a master seed.
pub fn stream_rng(seed: u64, keys: &[u64]) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut h = splitmix64(seed);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    rand_chacha::ChaCha8Rng::seed_from_u64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seconds to whole steps, `round(seconds / ts)`.
pub fn seconds_to_steps(seconds: f64, ts: f64) -> usize {
    (seconds / ts).round().max(0.0) as usize
}

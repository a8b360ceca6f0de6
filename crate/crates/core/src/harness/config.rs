//! File-backed scenario configuration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{self, LqgWeights, PlantModel};
use crate::detection::CyberMode;
use crate::linalg;

use super::HarnessError;

/// A covariance or weight given either as a full matrix or as a scalar
/// multiple of the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn resolve(&self, dim: usize, field: &str, errors: &mut Vec<String>) -> Option<DMatrix<f64>> {
        match self {
            MatrixSpec::Scalar(s) => Some(DMatrix::identity(dim, dim) * *s),
            MatrixSpec::Matrix(rows) => match linalg::from_rows(rows) {
                Ok(m) if m.shape() == (dim, dim) => Some(m),
                Ok(m) => {
                    errors.push(format!(
                        "{field}: expected {dim}x{dim}, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    ));
                    None
                }
                Err(e) => {
                    errors.push(format!("{field}: {e}"));
                    None
                }
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub kind: PlantKind,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub process_noise: MatrixSpec,
    pub measurement_noise: MatrixSpec,
    pub x0_mean: Vec<f64>,
    pub x0_cov: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    #[serde(rename = "W")]
    pub w: MatrixSpec,
    #[serde(rename = "U")]
    pub u: MatrixSpec,
}

/// Attack played during Monte Carlo rollouts, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AttackSchedule {
    None,
    Replay {
        onset_s: f64,
        window_s: f64,
    },
    Inject {
        onset_s: f64,
        #[serde(default)]
        end_s: Option<f64>,
        bias: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default = "default_kernel_trials")]
    pub trials: usize,
    #[serde(default)]
    pub warmup_steps: usize,
    #[serde(default = "default_detect_steps")]
    pub detect_steps: usize,
    /// CSV cache; read when present, written after estimation otherwise.
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            trials: default_kernel_trials(),
            warmup_steps: 0,
            detect_steps: default_detect_steps(),
            cache: None,
        }
    }
}

fn default_kernel_trials() -> usize {
    20_000
}

fn default_detect_steps() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmChoice {
    Mh,
    Subopt,
    Both,
}

impl AlgorithmChoice {
    pub fn runs_mh(self) -> bool {
        matches!(self, Self::Mh | Self::Both)
    }

    pub fn runs_subopt(self) -> bool {
        matches!(self, Self::Subopt | Self::Both)
    }
}

/// Scenario file as written. Required fields are optional here so that
/// validation can name every missing one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    #[serde(default)]
    pub name: Option<String>,
    pub plant: Option<PlantSpec>,
    #[serde(rename = "Ts")]
    pub ts: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "T", default)]
    pub t: Option<usize>,
    #[serde(default)]
    pub detector_window: Option<usize>,
    #[serde(default)]
    pub p_f: Option<f64>,
    #[serde(default)]
    pub p_f_multiplier: Option<f64>,
    pub alpha: Option<f64>,
    pub weights: Option<WeightSpec>,
    pub watermark_variances: Option<Vec<f64>>,
    #[serde(default)]
    pub replay_grid_s: Option<Vec<f64>>,
    #[serde(default)]
    pub injection_grid: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub attack_schedule: Option<AttackSchedule>,
    #[serde(default)]
    pub initial_mode: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub rollouts: Option<usize>,
    #[serde(default)]
    pub algorithm: Option<AlgorithmChoice>,
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Validated scenario with a discrete-time plant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub plant: PlantModel,
    pub ts: f64,
    pub k: usize,
    pub t: usize,
    pub detector_window: usize,
    /// Fixed penalty, or `None` to derive it from `p_f_multiplier`.
    pub p_f: Option<f64>,
    pub p_f_multiplier: f64,
    pub alpha: f64,
    pub weights: LqgWeights,
    pub watermark_variances: Vec<f64>,
    pub replay_grid_s: Vec<f64>,
    pub injection_grid: Vec<DVector<f64>>,
    pub attack_schedule: AttackSchedule,
    pub initial_mode: CyberMode,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub rollouts: usize,
    pub algorithm: AlgorithmChoice,
    pub budget: u64,
    pub output_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn replay_steps(&self) -> Vec<usize> {
        self.replay_grid_s
            .iter()
            .map(|&s| crate::sim::seconds_to_steps(s, self.ts))
            .collect()
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut cfg = parse_scenario(&text)?;
    if let Some(cache) = cfg.kernel.cache.as_mut() {
        if cache.is_relative() {
            if let Some(dir) = path.parent() {
                *cache = dir.join(&*cache);
            }
        }
    }
    Ok(cfg)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, HarnessError> {
    let raw: RawScenario = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate(raw)
}

fn matrix(rows: &[Vec<f64>], field: &str, errors: &mut Vec<String>) -> Option<DMatrix<f64>> {
    match linalg::from_rows(rows) {
        Ok(m) if m.nrows() > 0 && m.ncols() > 0 => Some(m),
        Ok(_) => {
            errors.push(format!("{field}: empty matrix"));
            None
        }
        Err(e) => {
            errors.push(format!("{field}: {e}"));
            None
        }
    }
}

pub fn validate(raw: RawScenario) -> Result<ScenarioConfig, HarnessError> {
    let mut errors = Vec::new();
    let mut missing = |name: &str| errors.push(format!("missing required field \"{name}\""));
    if raw.plant.is_none() {
        missing("plant");
    }
    if raw.ts.is_none() {
        missing("Ts");
    }
    if raw.k.is_none() {
        missing("K");
    }
    if raw.alpha.is_none() {
        missing("alpha");
    }
    if raw.weights.is_none() {
        missing("weights");
    }
    if raw.watermark_variances.is_none() {
        missing("watermark_variances");
    }
    if !errors.is_empty() {
        return Err(HarnessError::Validation(errors));
    }
    let ts = raw.ts.unwrap_or_default();
    if !(ts > 0.0 && ts.is_finite()) {
        errors.push(format!("Ts must be positive, got {ts}"));
    }
    let k = raw.k.unwrap_or_default();
    if k == 0 {
        errors.push("K must be at least 1".into());
    }
    let alpha = raw.alpha.unwrap_or_default();
    if !(alpha > 0.0 && alpha < 1.0) {
        errors.push(format!("alpha must lie in (0, 1), got {alpha}"));
    }

    let plant = raw.plant.as_ref().and_then(|p| build_plant(p, ts, &mut errors));
    let (n, p_in) = plant.as_ref().map(|p| (p.state_dim(), p.input_dim())).unwrap_or((0, 0));

    let weights = match (raw.weights.as_ref(), plant.as_ref()) {
        (Some(ws), Some(_)) => {
            let w = ws.w.resolve(n, "weights.W", &mut errors);
            let u = ws.u.resolve(p_in, "weights.U", &mut errors);
            match (w, u) {
                (Some(w), Some(u)) => match LqgWeights::new(w, u) {
                    Ok(wt) => Some(wt),
                    Err(e) => {
                        errors.push(format!("weights: {e}"));
                        None
                    }
                },
                _ => None,
            }
        }
        _ => None,
    };

    let watermark_variances = raw.watermark_variances.clone().unwrap_or_default();
    if watermark_variances.is_empty() {
        errors.push("watermark_variances must list at least one subsystem".into());
    }
    if watermark_variances.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
        errors.push("watermark_variances must be finite and nonnegative".into());
    }

    let replay_grid_s = raw.replay_grid_s.clone().unwrap_or_default();
    if replay_grid_s.windows(2).any(|w| w[0] >= w[1]) {
        errors.push("replay_grid_s must be strictly ascending".into());
    }
    let replay_steps: Vec<usize> = replay_grid_s
        .iter()
        .map(|&s| crate::sim::seconds_to_steps(s, ts))
        .collect();
    if replay_steps.contains(&0) {
        errors.push("replay_grid_s entries must be at least one sampling period".into());
    }
    let m_out = plant.as_ref().map(|p| p.output_dim()).unwrap_or(0);
    let injection_grid: Vec<DVector<f64>> = raw
        .injection_grid
        .clone()
        .unwrap_or_default()
        .into_iter()
        .map(DVector::from_vec)
        .collect();
    if plant.is_some() && injection_grid.iter().any(|b| b.len() != m_out) {
        errors.push(format!("injection_grid vectors must have {m_out} entries"));
    }

    let attack_schedule = raw.attack_schedule.clone().unwrap_or(AttackSchedule::None);
    let mut schedule_steps = 0;
    match &attack_schedule {
        AttackSchedule::None => {}
        AttackSchedule::Replay { onset_s, window_s } => {
            schedule_steps = crate::sim::seconds_to_steps(*window_s, ts);
            if *onset_s < 0.0 || schedule_steps == 0 {
                errors.push("attack_schedule: replay needs onset_s ≥ 0 and window_s ≥ Ts".into());
            }
        }
        AttackSchedule::Inject { onset_s, end_s, bias } => {
            if *onset_s < 0.0 || end_s.is_some_and(|e| e < *onset_s) {
                errors.push("attack_schedule: injection interval is invalid".into());
            }
            if plant.is_some() && bias.len() != m_out {
                errors.push(format!("attack_schedule.bias must have {m_out} entries"));
            }
        }
    }

    let detector_window = raw.detector_window.unwrap_or(0);
    let t_needed = replay_steps
        .iter()
        .copied()
        .chain([detector_window, schedule_steps, 1])
        .max()
        .unwrap_or(1);
    let t = match raw.t {
        Some(t) if t < t_needed => {
            errors.push(format!(
                "T = {t} is shorter than the longest replay or detector window ({t_needed})"
            ));
            t
        }
        Some(t) => t,
        None => t_needed,
    };

    if let Some(p_f) = raw.p_f {
        if !(p_f >= 0.0 && p_f.is_finite()) {
            errors.push("p_f must be finite and nonnegative".into());
        }
    }
    let p_f_multiplier = raw.p_f_multiplier.unwrap_or(10.0);
    if !(p_f_multiplier >= 0.0 && p_f_multiplier.is_finite()) {
        errors.push("p_f_multiplier must be finite and nonnegative".into());
    }

    let initial_mode = match raw.initial_mode.as_deref() {
        None => CyberMode::NoDetection,
        Some(s) => s.parse().unwrap_or_else(|_| {
            errors.push(format!(
                "initial_mode must be one of safe, no_detection, false_alarm; got \"{s}\""
            ));
            CyberMode::NoDetection
        }),
    };
    let kernel = raw.kernel.clone().unwrap_or_default();
    if kernel.trials == 0 || kernel.detect_steps == 0 {
        errors.push("kernel.trials and kernel.detect_steps must be positive".into());
    }
    let rollouts = raw.rollouts.unwrap_or(10_000);
    if rollouts < 2 {
        errors.push("rollouts must be at least 2".into());
    }

    if !errors.is_empty() {
        return Err(HarnessError::Validation(errors));
    }
    Ok(ScenarioConfig {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        plant: plant.expect("validated"),
        ts,
        k,
        t,
        detector_window,
        p_f: raw.p_f,
        p_f_multiplier,
        alpha,
        weights: weights.expect("validated"),
        watermark_variances,
        replay_grid_s,
        injection_grid,
        attack_schedule,
        initial_mode,
        seed: raw.seed.unwrap_or(0),
        kernel,
        rollouts,
        algorithm: raw.algorithm.unwrap_or(AlgorithmChoice::Both),
        budget: raw.budget.unwrap_or(crate::suboptimal::DEFAULT_BUDGET),
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
    })
}

fn build_plant(spec: &PlantSpec, ts: f64, errors: &mut Vec<String>) -> Option<PlantModel> {
    let a = matrix(&spec.a, "plant.a", errors)?;
    let b = matrix(&spec.b, "plant.b", errors)?;
    let c = matrix(&spec.c, "plant.c", errors)?;
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || c.ncols() != n {
        errors.push(format!(
            "plant: inconsistent shapes a {:?}, b {:?}, c {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        ));
        return None;
    }
    let (a, b) = match spec.kind {
        PlantKind::Discrete => (a, b),
        PlantKind::Continuous => {
            if !(ts > 0.0) {
                return None;
            }
            match control::discretize_zoh(&a, &b, ts) {
                Ok(ab) => ab,
                Err(e) => {
                    errors.push(format!("plant: {e}"));
                    return None;
                }
            }
        }
    };
    let q = spec.process_noise.resolve(n, "plant.process_noise", errors);
    let r = spec
        .measurement_noise
        .resolve(c.nrows(), "plant.measurement_noise", errors);
    let x0_cov = spec.x0_cov.resolve(n, "plant.x0_cov", errors);
    if spec.x0_mean.len() != n {
        errors.push(format!("plant.x0_mean must have {n} entries"));
        return None;
    }
    match PlantModel::new(a, b, c, q?, r?, DVector::from_vec(spec.x0_mean.clone()), x0_cov?) {
        Ok(p) => Some(p),
        Err(e) => {
            errors.push(format!("plant: {e}"));
            None
        }
    }
}

//! χ² residual detector, cyber modes and the detector-driven transition
//! kernel between them.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::gamma_lr;

use crate::control::PlantModel;
use crate::error::{GameError, Result};
use crate::sim::{self, AttackAction, EstimateWindow, NoiseMode, PlantNoise, Subsystem};

/// χ² detector on the innovation `z`: alarm when `zᵀ Pz⁻¹ z > threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub false_alarm_rate: f64,
    pub statistic_dim: usize,
    pub threshold: f64,
    pub window_t1: usize,
    pub innovation_cov: DMatrix<f64>,
}

impl DetectorSpec {
    pub fn new(false_alarm_rate: f64, innovation_cov: DMatrix<f64>, window_t1: usize) -> Result<Self> {
        let m = innovation_cov.nrows();
        if !innovation_cov.is_square() || m == 0 {
            return Err(GameError::DimensionMismatch(
                "innovation covariance must be square".into(),
            ));
        }
        if innovation_cov.clone().cholesky().is_none() {
            return Err(GameError::SingularCovariance);
        }
        let threshold = chi2_threshold(m, false_alarm_rate)?;
        Ok(Self {
            false_alarm_rate,
            statistic_dim: m,
            threshold,
            window_t1,
            innovation_cov,
        })
    }

    pub fn alarm(&self, residual: &DVector<f64>) -> Result<bool> {
        Ok(chi2_statistic(residual, &self.innovation_cov)? > self.threshold)
    }
}

/// Upper `alpha` quantile of the χ² distribution with `m` degrees of
/// freedom, by bisection on the regularized lower incomplete gamma function.
pub fn chi2_threshold(m: usize, alpha: f64) -> Result<f64> {
    if m == 0 {
        return Err(GameError::InvalidArgument(
            "χ² needs at least one degree of freedom".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GameError::InvalidArgument(format!(
            "false alarm rate {alpha} outside (0, 1)"
        )));
    }
    let k = m as f64 / 2.0;
    let tail = |x: f64| 1.0 - gamma_lr(k, x / 2.0);
    let mut lo = 0.0;
    let mut hi = m as f64 + 10.0;
    while tail(hi) > alpha {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `zᵀ Pz⁻¹ z`
pub fn chi2_statistic(residual: &DVector<f64>, pz: &DMatrix<f64>) -> Result<f64> {
    if pz.nrows() != residual.len() || !pz.is_square() {
        return Err(GameError::DimensionMismatch(format!(
            "residual of length {} with covariance {:?}",
            residual.len(),
            pz.shape()
        )));
    }
    let chol = pz.clone().cholesky().ok_or(GameError::SingularCovariance)?;
    let solved = chol.solve(residual);
    Ok(residual.dot(&solved).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CyberMode {
    /// Attack detected and neutralized. Absorbing.
    Safe,
    NoDetection,
    FalseAlarm,
}

impl CyberMode {
    pub const ALL: [CyberMode; 3] = [CyberMode::Safe, CyberMode::NoDetection, CyberMode::FalseAlarm];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(l: usize) -> Option<Self> {
        Self::ALL.get(l).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CyberMode::Safe => "safe",
            CyberMode::NoDetection => "no_detection",
            CyberMode::FalseAlarm => "false_alarm",
        }
    }

    /// Mode after one stage given the alarm outcome.
    pub fn next(self, alarm: bool, attacked: bool) -> Self {
        match self {
            CyberMode::Safe => CyberMode::Safe,
            CyberMode::FalseAlarm => CyberMode::NoDetection,
            CyberMode::NoDetection => match (alarm, attacked) {
                (true, true) => CyberMode::Safe,
                (true, false) => CyberMode::FalseAlarm,
                (false, _) => CyberMode::NoDetection,
            },
        }
    }
}

impl fmt::Display for CyberMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CyberMode {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| GameError::InvalidArgument(format!("unknown cyber mode '{s}'")))
    }
}

/// `P(δ_h | δ_l, a_i, u_j)` for every action pair and source mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    m: usize,
    n: usize,
    probs: Vec<[f64; 3]>,
}

impl TransitionKernel {
    /// Kernel whose `NoDetection` rows come from `detect(i, j)`, a
    /// `(p_safe, p_nodetect, p_false)` triple.
    pub fn from_detection(m: usize, n: usize, mut detect: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut probs = Vec::with_capacity(m * n * 3);
        for i in 0..m {
            for j in 0..n {
                probs.push([1.0, 0.0, 0.0]);
                probs.push(detect(i, j));
                probs.push([0.0, 1.0, 0.0]);
            }
        }
        Self { m, n, probs }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn row(&self, i: usize, j: usize, source: CyberMode) -> [f64; 3] {
        self.probs[(i * self.n + j) * 3 + source.index()]
    }

    /// Row-stochasticity and absorption of `Safe`.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.m {
            for j in 0..self.n {
                for mode in CyberMode::ALL {
                    let row = self.row(i, j, mode);
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                        return Err(GameError::InvalidArgument(format!(
                            "kernel row ({}, {}, {mode}) = {row:?} is not a probability vector",
                            i + 1,
                            j + 1
                        )));
                    }
                }
                if self.row(i, j, CyberMode::Safe) != [1.0, 0.0, 0.0] {
                    return Err(GameError::InvalidArgument("safe mode must be absorbing".into()));
                }
            }
        }
        Ok(())
    }

    /// CSV with header `i,j,source_mode,p_safe,p_nodetect,p_false`; action
    /// indices are 1-based.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,source_mode,p_safe,p_nodetect,p_false")?;
        for i in 0..self.m {
            for j in 0..self.n {
                for mode in CyberMode::ALL {
                    let r = self.row(i, j, mode);
                    writeln!(out, "{},{},{},{:?},{:?},{:?}", i + 1, j + 1, mode, r[0], r[1], r[2])?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| GameError::InvalidArgument(e.to_string()))?;
            if lineno == 0 {
                if line.trim() != "i,j,source_mode,p_safe,p_nodetect,p_false" {
                    return Err(GameError::InvalidArgument(format!("unexpected kernel header '{line}'")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = || GameError::InvalidArgument(format!("kernel line {}: '{line}'", lineno + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(bad());
            }
            let i: usize = fields[0].parse().map_err(|_| bad())?;
            let j: usize = fields[1].parse().map_err(|_| bad())?;
            let mode: CyberMode = fields[2].parse()?;
            let mut p = [0.0; 3];
            for (slot, s) in p.iter_mut().zip(&fields[3..]) {
                *slot = s.parse().map_err(|_| bad())?;
            }
            if i == 0 || j == 0 {
                return Err(bad());
            }
            rows.push((i - 1, j - 1, mode, p));
        }
        let m = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let n = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let mut seen = vec![false; m * n * 3];
        let mut probs = vec![[0.0; 3]; m * n * 3];
        for (i, j, mode, p) in rows {
            let idx = (i * n + j) * 3 + mode.index();
            seen[idx] = true;
            probs[idx] = p;
        }
        if m == 0 || seen.iter().any(|s| !s) {
            return Err(GameError::InvalidArgument(
                "kernel CSV does not cover every (i, j, mode)".into(),
            ));
        }
        let kernel = Self { m, n, probs };
        kernel.validate()?;
        Ok(kernel)
    }
}

/// Monte Carlo settings for kernel estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub trials: usize,
    pub seed: u64,
    /// Attack-free steps simulated before the attack starts.
    pub warmup_steps: usize,
    /// Steps the pair is applied before the alarm is read. A replay is
    /// applied for at most `delay − 1` steps so the residual read at the end
    /// still compares against recorded data, not the wrapped-around loop.
    pub detect_steps: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            trials: 20_000,
            seed: 0,
            warmup_steps: 0,
            detect_steps: 1,
        }
    }
}

/// Alarm frequency of pair `(attack, subsystem)` over `trials` sampled runs
/// started from `window`.
pub fn alarm_rate(
    plant: &PlantModel,
    subsystem: &Subsystem,
    attack: &AttackAction,
    window: &EstimateWindow,
    config: &KernelConfig,
    stream: u64,
) -> Result<f64> {
    if config.trials == 0 {
        return Err(GameError::InvalidArgument(
            "kernel estimation needs at least one trial".into(),
        ));
    }
    let noise = PlantNoise::new(plant);
    let steps = match attack {
        AttackAction::Replay { delay } => config.detect_steps.min(delay.saturating_sub(1)).max(1),
        _ => config.detect_steps.max(1),
    };
    let alarms = (0..config.trials)
        .into_par_iter()
        .map(|trial| -> Result<usize> {
            let mut rng = sim::stream_rng(config.seed, &[stream, trial as u64]);
            let mut w = window.clone();
            w.state = &w.state + noise.initial(&mut rng);
            w.output = &plant.c * &w.state + noise.measurement(&mut rng);
            let mut mode = NoiseMode::Sample {
                noise: &noise,
                rng: &mut rng,
            };
            for _ in 0..config.warmup_steps {
                let res = sim::step_dynamics(plant, subsystem, &AttackAction::NoAttack, &w, &mut mode)?;
                w.advance(&res);
            }
            let mut residual = None;
            for _ in 0..steps {
                let res = sim::step_dynamics(plant, subsystem, attack, &w, &mut mode)?;
                w.advance(&res);
                residual = Some(res.residual);
            }
            let z = residual.expect("at least one detection step");
            Ok(usize::from(subsystem.detector.alarm(&z)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(alarms.iter().sum::<usize>() as f64 / config.trials as f64)
}

/// Estimates the kernel at `window`. Rows for `NoAttack` are analytic
/// `(0, 1 − α, α)`; attacked rows put the alarm frequency on `Safe`.
pub fn estimate_transition_kernel(
    plant: &PlantModel,
    subsystems: &[Subsystem],
    attacks: &[AttackAction],
    window: &EstimateWindow,
    config: &KernelConfig,
) -> Result<TransitionKernel> {
    let (m, n) = (attacks.len(), subsystems.len());
    let mut rates = vec![[0.0; 3]; m * n];
    for i in 0..m {
        for j in 0..n {
            let alpha = subsystems[j].detector.false_alarm_rate;
            rates[i * n + j] = if attacks[i].is_attack() {
                let p = alarm_rate(plant, &subsystems[j], &attacks[i], window, config, (i * n + j) as u64)?;
                [p, 1.0 - p, 0.0]
            } else {
                [0.0, 1.0 - alpha, alpha]
            };
        }
    }
    let kernel = TransitionKernel::from_detection(m, n, |i, j| rates[i * n + j]);
    kernel.validate()?;
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chi2_thresholds() {
        assert_relative_eq!(chi2_threshold(2, 0.05).unwrap(), -2.0 * 0.05f64.ln(), epsilon = 1e-9);
        // 2-dof tail is e^{−t/2}
        assert_relative_eq!(chi2_threshold(2, (-1.0f64).exp()).unwrap(), 2.0, epsilon = 1e-9);
        let alpha = 1.0 - (-1.0f64).exp();
        assert_relative_eq!(chi2_threshold(2, alpha).unwrap(), -2.0 * alpha.ln(), epsilon = 1e-9);
        assert_relative_eq!(chi2_threshold(4, 0.05).unwrap(), 9.4877, epsilon = 1e-4);
        assert!(chi2_threshold(0, 0.05).is_err());
        assert!(chi2_threshold(2, 1.0).is_err());
    }

    #[test]
    fn chi2_tail_matches_alpha() {
        for m in 1..6 {
            for alpha in [0.001, 0.05, 0.3] {
                let t = chi2_threshold(m, alpha).unwrap();
                let tail = 1.0 - gamma_lr(m as f64 / 2.0, t / 2.0);
                assert!((tail - alpha).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn chi2_statistics() {
        let i2 = DMatrix::identity(2, 2);
        assert_eq!(chi2_statistic(&DVector::zeros(2), &i2).unwrap(), 0.0);
        assert_relative_eq!(chi2_statistic(&DVector::from_vec(vec![1.0, 2.0]), &i2).unwrap(), 5.0);
        assert_relative_eq!(
            chi2_statistic(&DVector::from_vec(vec![2.0, 0.0]), &(i2 * 2.0)).unwrap(),
            2.0
        );
        assert!(matches!(
            chi2_statistic(&DVector::zeros(2), &DMatrix::zeros(2, 2)),
            Err(GameError::SingularCovariance)
        ));
    }

    #[test]
    fn mode_machine() {
        use CyberMode::*;
        assert_eq!(Safe.next(false, false), Safe);
        assert_eq!(FalseAlarm.next(true, true), NoDetection);
        assert_eq!(NoDetection.next(true, true), Safe);
        assert_eq!(NoDetection.next(true, false), FalseAlarm);
        assert_eq!(NoDetection.next(false, true), NoDetection);
        assert_eq!("false_alarm".parse::<CyberMode>().unwrap(), FalseAlarm);
    }

    #[test]
    fn kernel_csv_round_trip() {
        let k = TransitionKernel::from_detection(2, 3, |i, j| {
            let p = 0.1 * (i + j) as f64;
            [p, 1.0 - p, 0.0]
        });
        k.validate().unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let back = TransitionKernel::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, k);
        assert!(TransitionKernel::read_csv("i,j\n".as_bytes()).is_err());
    }
}

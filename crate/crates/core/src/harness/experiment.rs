//! Policy comparison: both algorithms, fixed-subsystem baselines and Monte
//! Carlo rollouts under the scenario's attack schedule.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::detection::CyberMode;
use crate::error::GameError;
use crate::game::{self, MixedStrategyProfile};
use crate::linalg::quad_form;
use crate::moving_horizon;
use crate::sim::{self, AttackAction, NoiseMode, PlantNoise};
use crate::suboptimal;

use super::{classified_attack, scheduled_attack, AlgorithmChoice, HarnessResult, Scenario};

pub const MOVING_HORIZON: &str = "moving_horizon";
pub const SUBOPTIMAL: &str = "suboptimal";
pub const ALWAYS_C1: &str = "always_c1";
pub const ALWAYS_C2: &str = "always_c2";

#[derive(Debug, Clone, Serialize)]
pub struct PolicyReport {
    pub name: String,
    #[serde(skip)]
    pub strategies: Vec<MixedStrategyProfile>,
    /// Expected stage costs from the game model with the attacker pinned to
    /// the classified schedule.
    pub model_cost: Vec<f64>,
    pub model_total: f64,
    /// Monte Carlo mean stage costs.
    pub mc_cost: Vec<f64>,
    pub mc_total: f64,
    pub mc_total_se: f64,
    /// Empirical mode probabilities at stages `0..=K`.
    pub mode_prob: Vec<[f64; 3]>,
    #[serde(skip)]
    pub totals: Vec<f64>,
}

/// Mean and standard error of the per-rollout difference `a − b`.
#[derive(Debug, Clone, Serialize)]
pub struct PairedDifference {
    pub a: String,
    pub b: String,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmStats {
    pub wall_time_s: f64,
    pub solve_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub p_f: f64,
    pub nominal_cost: f64,
    pub rollouts: usize,
    pub seed: u64,
    pub moving_horizon: Option<AlgorithmStats>,
    pub suboptimal: Option<AlgorithmStats>,
    /// `Σ_l p(l) v̄_1(l)` from the suboptimal algorithm.
    pub suboptimal_bound: Option<f64>,
    pub skipped: Vec<String>,
    pub policies: Vec<PolicyReport>,
    pub paired: Vec<PairedDifference>,
}

impl RunReport {
    pub fn policy(&self, name: &str) -> Option<&PolicyReport> {
        self.policies.iter().find(|p| p.name == name)
    }

    pub fn paired(&self, a: &str, b: &str) -> Option<&PairedDifference> {
        self.paired.iter().find(|d| d.a == a && d.b == b)
    }
}

/// Same system strategy in every stage and mode.
pub fn fixed_policy(m: usize, n: usize, k: usize, j: usize) -> Vec<MixedStrategyProfile> {
    vec![MixedStrategyProfile::uniform(m, n).with_fixed_system(j); k]
}

/// Runs the selected algorithms and baselines and evaluates every policy.
pub fn run_comparison(scn: &Scenario, algorithm: AlgorithmChoice, budget: u64) -> HarnessResult<RunReport> {
    let cfg = &scn.config;
    let (m, n, k) = (scn.model.m(), scn.model.n(), cfg.k);
    let mut candidates: Vec<(&str, Vec<MixedStrategyProfile>)> = Vec::new();
    let mut skipped = Vec::new();
    let mut mh_stats = None;
    let mut sub_stats = None;
    let mut bound = None;

    if algorithm.runs_mh() {
        let start = Instant::now();
        let res = moving_horizon::run_moving_horizon(&scn.model, &scn.initial, k)?;
        mh_stats = Some(AlgorithmStats {
            wall_time_s: start.elapsed().as_secs_f64(),
            solve_count: res.solve_count,
        });
        candidates.push((MOVING_HORIZON, res.strategies()));
    }
    if algorithm.runs_subopt() {
        let start = Instant::now();
        match suboptimal::robust_value_iteration(&scn.model, &scn.initial, k, budget) {
            Ok(res) => {
                sub_stats = Some(AlgorithmStats {
                    wall_time_s: start.elapsed().as_secs_f64(),
                    solve_count: res.solve_count,
                });
                bound = Some(res.bound_for(&scn.initial.mode_dist));
                candidates.push((SUBOPTIMAL, res.strategies));
            }
            Err(e @ GameError::BudgetExceeded { .. }) if algorithm == AlgorithmChoice::Both => {
                log::warn!("suboptimal algorithm skipped: {e}");
                skipped.push(format!("{SUBOPTIMAL}: {e}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if n > 1 {
        candidates.push((ALWAYS_C2, fixed_policy(m, n, k, 1)));
    }
    candidates.push((ALWAYS_C1, fixed_policy(m, n, k, 0)));

    let mut policies = Vec::with_capacity(candidates.len());
    for (name, strategies) in candidates {
        policies.push(evaluate_policy(scn, name, strategies)?);
    }
    let mut paired = Vec::new();
    for (a, b) in [
        (SUBOPTIMAL, MOVING_HORIZON),
        (MOVING_HORIZON, ALWAYS_C2),
        (SUBOPTIMAL, ALWAYS_C2),
        (ALWAYS_C1, ALWAYS_C2),
    ] {
        let pa = policies.iter().find(|p| p.name == a);
        let pb = policies.iter().find(|p| p.name == b);
        if let (Some(pa), Some(pb)) = (pa, pb) {
            let diffs: Vec<f64> = pa.totals.iter().zip(&pb.totals).map(|(x, y)| x - y).collect();
            let (mean, se) = mean_se(&diffs);
            paired.push(PairedDifference {
                a: a.into(),
                b: b.into(),
                mean,
                se,
            });
        }
    }
    Ok(RunReport {
        scenario: cfg.name.clone(),
        k,
        m,
        n,
        p_f: scn.model.p_f,
        nominal_cost: scn.nominal_cost,
        rollouts: cfg.rollouts,
        seed: cfg.seed,
        moving_horizon: mh_stats,
        suboptimal: sub_stats,
        suboptimal_bound: bound,
        skipped,
        policies,
        paired,
    })
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Game-model cost series and Monte Carlo statistics of one policy.
pub fn evaluate_policy(
    scn: &Scenario,
    name: &str,
    strategies: Vec<MixedStrategyProfile>,
) -> HarnessResult<PolicyReport> {
    let pinned: Vec<MixedStrategyProfile> = strategies
        .iter()
        .enumerate()
        .map(|(k, profile)| {
            let i = classified_attack(&scn.config, k);
            let mut p = profile.clone();
            for f in &mut p.f {
                f.fill(0.0);
                f[i] = 1.0;
            }
            p
        })
        .collect();
    let eval = game::evaluate_total_payoff(&scn.model, &scn.initial, &pinned)?;
    let stats = monte_carlo(scn, &strategies)?;
    Ok(PolicyReport {
        name: name.into(),
        strategies,
        model_cost: eval.stage_costs,
        model_total: eval.total,
        mc_cost: stats.stage_mean,
        mc_total: stats.total_mean,
        mc_total_se: stats.total_se,
        mode_prob: stats.mode_prob,
        totals: stats.totals,
    })
}

#[derive(Debug, Clone)]
pub struct RolloutStats {
    pub stage_mean: Vec<f64>,
    pub mode_prob: Vec<[f64; 3]>,
    pub totals: Vec<f64>,
    pub total_mean: f64,
    pub total_se: f64,
}

struct Rollout {
    costs: Vec<f64>,
    modes: Vec<CyberMode>,
}

fn sample_index<R: Rng + ?Sized>(p: &DVector<f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return idx;
        }
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Sampled closed-loop runs of a system strategy sequence. Rollout `r`
/// draws plant noise from stream `(seed, r, 0)` and subsystem choices from
/// `(seed, r, 1)`, so policies share their noise realizations.
pub fn monte_carlo(scn: &Scenario, strategies: &[MixedStrategyProfile]) -> HarnessResult<RolloutStats> {
    let cfg = &scn.config;
    let model = &scn.model;
    let plant = &model.plant;
    let noise = PlantNoise::new(plant);
    let start_mode = cfg.initial_mode;
    let runs = (0..cfg.rollouts)
        .into_par_iter()
        .map(|r| -> crate::error::Result<Rollout> {
            let mut noise_rng = sim::stream_rng(cfg.seed, &[r as u64, 0]);
            let mut pick_rng = sim::stream_rng(cfg.seed, &[r as u64, 1]);
            let mut w = scn.initial.window.clone();
            w.state = &w.state + noise.initial(&mut noise_rng);
            w.output = &plant.c * &w.state + noise.measurement(&mut noise_rng);
            let mut mode = start_mode;
            let mut costs = Vec::with_capacity(strategies.len());
            let mut modes = Vec::with_capacity(strategies.len() + 1);
            modes.push(mode);
            for (k, profile) in strategies.iter().enumerate() {
                let j = sample_index(&profile.g[mode.index()], &mut pick_rng);
                let action = match mode {
                    CyberMode::Safe => AttackAction::NoAttack,
                    _ => scheduled_attack(cfg, k),
                };
                let subsystem = &model.subsystems[j];
                let res = sim::step_dynamics(
                    plant,
                    subsystem,
                    &action,
                    &w,
                    &mut NoiseMode::Sample {
                        noise: &noise,
                        rng: &mut noise_rng,
                    },
                )?;
                costs.push(match mode {
                    CyberMode::FalseAlarm => model.p_f,
                    _ => {
                        quad_form(&res.filtered_estimate, &model.weights.w) + quad_form(&res.control, &model.weights.u)
                    }
                });
                let alarm = subsystem.detector.alarm(&res.residual)?;
                mode = mode.next(alarm, action.is_attack());
                modes.push(mode);
                w.advance(&res);
            }
            Ok(Rollout { costs, modes })
        })
        .collect::<crate::error::Result<Vec<_>>>()?;

    let k = strategies.len();
    let count = runs.len() as f64;
    let mut stage_mean = vec![0.0; k];
    let mut mode_prob = vec![[0.0; 3]; k + 1];
    let mut totals = Vec::with_capacity(runs.len());
    for run in &runs {
        for (acc, c) in stage_mean.iter_mut().zip(&run.costs) {
            *acc += c;
        }
        for (acc, mode) in mode_prob.iter_mut().zip(&run.modes) {
            acc[mode.index()] += 1.0;
        }
        totals.push(run.costs.iter().sum::<f64>());
    }
    for v in &mut stage_mean {
        *v /= count;
    }
    for row in &mut mode_prob {
        for v in row.iter_mut() {
            *v /= count;
        }
    }
    let (total_mean, total_se) = mean_se(&totals);
    Ok(RolloutStats {
        stage_mean,
        mode_prob,
        totals,
        total_mean,
        total_se,
    })
}

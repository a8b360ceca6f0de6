//! Moving-horizon equilibrium computation: each stage is solved as a one-shot
//! game on the immediate payoff plus kernel-weighted values of the next stage
//! treated as terminal.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::detection::{CyberMode, TransitionKernel};
use crate::error::Result;
use crate::game::{self, GameModel, HybridGameState, MixedStrategyProfile, StageSteps};
use crate::matrix_game::{self, GameSolution};

/// Terminal values of the next stage predicted after each current pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadValueMatrices {
    /// Entry `(i, j)` of matrix `h` is the value of next-stage mode `h` at the
    /// window reached by the attacked step `(a_i, u_j)`.
    pub v_next: [DMatrix<f64>; 3],
    /// Safe-mode value at the window reached by the neutralized step
    /// `(a_1, u_j)`, broadcast over rows.
    pub v_safe: DMatrix<f64>,
    /// Matrix games solved to build these values.
    pub solves: usize,
}

impl LookaheadValueMatrices {
    /// Continuation values seen from source mode `l`.
    fn continuation(&self, source: CyberMode, h: usize) -> &DMatrix<f64> {
        match source {
            CyberMode::Safe => &self.v_safe,
            _ => &self.v_next[h],
        }
    }
}

/// Values of the three next-stage games for every current pair. The Safe
/// game has identical rows and the FalseAlarm game is constant, so only the
/// NoDetection games need a linear program.
pub fn lookahead_values(
    model: &GameModel,
    state: &HybridGameState,
    steps: &StageSteps,
) -> Result<LookaheadValueMatrices> {
    let (m, n) = (model.m(), model.n());
    let cells: Vec<(f64, f64)> = (0..m * n)
        .into_par_iter()
        .map(|idx| -> Result<(f64, f64)> {
            let (i, j) = (idx / n, idx % n);
            let mut child = state.window.clone();
            child.advance(steps.pair(i, j));
            let r = game::build_stage_payoff(model, &child)?;
            let safe = matrix_game::value_identical_rows(&r[0]).expect("safe payoffs ignore the attacker");
            let attacked = matrix_game::solve_zero_sum(&r[1])?.value;
            Ok((safe, attacked))
        })
        .collect::<Result<Vec<_>>>()?;
    let safe = DMatrix::from_fn(m, n, |i, j| cells[i * n + j].0);
    let attacked = DMatrix::from_fn(m, n, |i, j| cells[i * n + j].1);
    // the neutralized step coincides with the NoAttack row
    let v_safe = DMatrix::from_fn(m, n, |_, j| safe[(0, j)]);
    Ok(LookaheadValueMatrices {
        v_next: [safe, attacked, DMatrix::from_element(m, n, model.p_f)],
        v_safe,
        solves: m * n,
    })
}

/// `Q_l = r_l + Σ_h P(h | l) ∘ v_next(h)`, elementwise over pairs.
pub fn auxiliary_matrices(
    payoffs: &[DMatrix<f64>; 3],
    lookahead: &LookaheadValueMatrices,
    kernel: &TransitionKernel,
) -> [DMatrix<f64>; 3] {
    CyberMode::ALL.map(|source| {
        let l = source.index();
        let mut q = payoffs[l].clone();
        for i in 0..q.nrows() {
            for j in 0..q.ncols() {
                let row = kernel.row(i, j, source);
                for (h, &p) in row.iter().enumerate() {
                    if p != 0.0 {
                        q[(i, j)] += p * lookahead.continuation(source, h)[(i, j)];
                    }
                }
            }
        }
        q
    })
}

/// Solves the three per-mode games.
pub fn stage_solve(q: &[DMatrix<f64>; 3]) -> Result<[GameSolution; 3]> {
    Ok([
        matrix_game::solve_zero_sum(&q[0])?,
        matrix_game::solve_zero_sum(&q[1])?,
        matrix_game::solve_zero_sum(&q[2])?,
    ])
}

pub fn profile_of(solutions: &[GameSolution; 3]) -> MixedStrategyProfile {
    MixedStrategyProfile {
        f: solutions.clone().map(|s| s.f_star),
        g: solutions.clone().map(|s| s.g_star),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub mode_dist: [f64; 3],
    pub values: [f64; 3],
    pub profile: MixedStrategyProfile,
    pub q: [DMatrix<f64>; 3],
    /// Expected immediate cost of the stage under the equilibrium profile.
    pub expected_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovingHorizonResult {
    pub stages: Vec<StageRecord>,
    pub final_state: HybridGameState,
    pub solve_count: usize,
}

impl MovingHorizonResult {
    pub fn strategies(&self) -> Vec<MixedStrategyProfile> {
        self.stages.iter().map(|s| s.profile.clone()).collect()
    }

    pub fn total_expected_cost(&self) -> f64 {
        self.stages.iter().map(|s| s.expected_cost).sum()
    }
}

/// Runs `k_stages` stages from `initial`. The last stage has no successor and
/// is solved on its immediate payoff.
pub fn run_moving_horizon(
    model: &GameModel,
    initial: &HybridGameState,
    k_stages: usize,
) -> Result<MovingHorizonResult> {
    let mut state = initial.clone();
    let mut stages = Vec::with_capacity(k_stages);
    let mut solve_count = 0;
    for k in 0..k_stages {
        let steps = StageSteps::compute(model, &state.window)?;
        let payoffs = steps.payoffs(model);
        let q = if k + 1 < k_stages {
            let lookahead = lookahead_values(model, &state, &steps)?;
            solve_count += lookahead.solves;
            auxiliary_matrices(&payoffs, &lookahead, &model.kernel)
        } else {
            payoffs.clone()
        };
        let solutions = stage_solve(&q)?;
        solve_count += 3;
        let profile = profile_of(&solutions);
        let expected_cost = game::expected_stage_cost(&payoffs, &state.mode_dist, &profile);
        let next = game::update_from_steps(model, &state, &profile, &steps)?;
        stages.push(StageRecord {
            stage: k,
            mode_dist: state.mode_dist,
            values: solutions.map(|s| s.value),
            profile,
            q,
            expected_cost,
        });
        state = next;
    }
    Ok(MovingHorizonResult {
        stages,
        final_state: state,
        solve_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub strategy_drift: f64,
    pub q_drift: f64,
}

/// Largest stage-to-stage change of strategies and auxiliary matrices over
/// the last `tail_window` stages. The terminal stage carries no lookahead
/// and is left out.
pub fn convergence_diagnostic(result: &MovingHorizonResult, tail_window: usize, tol: f64) -> ConvergenceReport {
    let stages = match result.stages.len() {
        0 | 1 => &result.stages[..],
        len => &result.stages[..len - 1],
    };
    let start = stages.len().saturating_sub(tail_window).max(1);
    let mut strategy_drift: f64 = 0.0;
    let mut q_drift: f64 = 0.0;
    for k in start..stages.len() {
        let (prev, cur) = (&stages[k - 1], &stages[k]);
        for l in 0..3 {
            strategy_drift = strategy_drift
                .max((&cur.profile.f[l] - &prev.profile.f[l]).amax())
                .max((&cur.profile.g[l] - &prev.profile.g[l]).amax());
            if cur.q[l].shape() == prev.q[l].shape() {
                q_drift = q_drift.max((&cur.q[l] - &prev.q[l]).amax());
            }
        }
    }
    ConvergenceReport {
        converged: strategy_drift <= tol && q_drift <= tol,
        strategy_drift,
        q_drift,
    }
}

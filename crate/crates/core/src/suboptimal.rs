//! Finite-horizon robust value iteration over pure-strategy histories.
//!
//! Every pure history of action pairs is enumerated up to the horizon, the
//! stage payoffs are evaluated at each history's expected window, and the
//! values are backed up from the last stage taking, per stage and mode, the
//! largest game value over all histories. The result upper-bounds the game
//! value and comes with suboptimal strategies read off the maximizing
//! histories.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::detection::CyberMode;
use crate::error::{GameError, Result};
use crate::game::{self, GameModel, HybridGameState, MixedStrategyProfile, StageSteps};
use crate::matrix_game::{self, GameSolution};
use crate::sim::EstimateWindow;

pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Sequence of pure pairs played so far with the expected window it leads to.
#[derive(Debug, Clone, PartialEq)]
pub struct PureHistory {
    pub actions: Vec<(usize, usize)>,
    pub window: EstimateWindow,
}

/// `Σ_{d < k} (MN)^d`, the node count of a `k`-stage enumeration.
pub fn required_nodes(mn: usize, k_stages: usize) -> f64 {
    (0..k_stages).map(|d| (mn as f64).powi(d as i32)).sum()
}

fn check_budget(required: f64, budget: u64) -> Result<()> {
    if required > budget as f64 {
        return Err(GameError::BudgetExceeded { required, budget });
    }
    Ok(())
}

/// All `(MN)^{k−1}` pure histories reaching stage `k` (1-based), in
/// lexicographic order.
pub fn enumerate_pure_histories(
    model: &GameModel,
    initial: &EstimateWindow,
    k: usize,
    budget: u64,
) -> Result<Vec<PureHistory>> {
    let depth = k.saturating_sub(1);
    let mn = model.m() * model.n();
    check_budget((mn as f64).powi(depth as i32), budget)?;
    let mut level = vec![PureHistory {
        actions: Vec::new(),
        window: initial.clone(),
    }];
    for _ in 0..depth {
        level = level
            .par_iter()
            .map(|h| -> Result<Vec<PureHistory>> {
                let steps = StageSteps::compute(model, &h.window)?;
                let mut children = Vec::with_capacity(mn);
                for i in 0..model.m() {
                    for j in 0..model.n() {
                        let mut window = h.window.clone();
                        window.advance(steps.pair(i, j));
                        let mut actions = h.actions.clone();
                        actions.push((i, j));
                        children.push(PureHistory { actions, window });
                    }
                }
                Ok(children)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
    }
    Ok(level)
}

/// Stage payoffs of every node, stored compactly per depth: for each node
/// the Safe row (`N` values) followed by the NoDetection matrix row-major.
struct PayoffTree {
    levels: Vec<Vec<f64>>,
    stride: usize,
}

fn node_payoffs(model: &GameModel, steps: &StageSteps, out: &mut Vec<f64>) {
    let r = steps.payoffs(model);
    out.extend(r[0].row(0).iter());
    for i in 0..model.m() {
        out.extend(r[1].row(i).iter());
    }
}

fn subtree(model: &GameModel, window: &EstimateWindow, remaining: usize, levels: &mut [Vec<f64>]) -> Result<()> {
    let steps = StageSteps::compute(model, window)?;
    node_payoffs(model, &steps, &mut levels[0]);
    if remaining > 1 {
        for i in 0..model.m() {
            for j in 0..model.n() {
                let mut child = window.clone();
                child.advance(steps.pair(i, j));
                subtree(model, &child, remaining - 1, &mut levels[1..])?;
            }
        }
    }
    Ok(())
}

fn build_tree(model: &GameModel, window: &EstimateWindow, k_stages: usize) -> Result<PayoffTree> {
    let (m, n) = (model.m(), model.n());
    let stride = n + m * n;
    let mut levels = vec![Vec::new(); k_stages];
    let steps = StageSteps::compute(model, window)?;
    node_payoffs(model, &steps, &mut levels[0]);
    if k_stages > 1 {
        // first-level subtrees in parallel, concatenated in lexicographic order
        let parts = (0..m * n)
            .into_par_iter()
            .map(|idx| -> Result<Vec<Vec<f64>>> {
                let mut child = window.clone();
                child.advance(steps.pair(idx / n, idx % n));
                let mut sub = vec![Vec::new(); k_stages - 1];
                subtree(model, &child, k_stages - 1, &mut sub)?;
                Ok(sub)
            })
            .collect::<Result<Vec<_>>>()?;
        for part in parts {
            for (d, level) in part.into_iter().enumerate() {
                levels[d + 1].extend(level);
            }
        }
    }
    Ok(PayoffTree { levels, stride })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuboptimalResult {
    /// Robust values per stage, `v̄_k` for (Safe, NoDetection, FalseAlarm).
    pub v_bar: Vec<[f64; 3]>,
    /// Per-stage strategies read off the maximizing histories.
    pub strategies: Vec<MixedStrategyProfile>,
    /// Lexicographic index of the maximizing history per stage and mode.
    pub argmax_histories: Vec<[usize; 3]>,
    pub solve_count: usize,
    pub nodes: usize,
}

impl SuboptimalResult {
    /// `v̄_1`, the upper bound at the first stage.
    pub fn v_bar_1(&self) -> [f64; 3] {
        self.v_bar[0]
    }

    /// Upper bound for an initial mode distribution.
    pub fn bound_for(&self, mode_dist: &[f64; 3]) -> f64 {
        (0..3).map(|l| mode_dist[l] * self.v_bar[0][l]).sum()
    }
}

type Best = [Option<(usize, GameSolution)>; 3];

fn better(a: Best, b: Best) -> Best {
    let mut out: Best = [None, None, None];
    for (slot, (x, y)) in out.iter_mut().zip(a.into_iter().zip(b)) {
        *slot = match (x, y) {
            (None, y) => y,
            (x, None) => x,
            (Some(x), Some(y)) => {
                if y.1.value > x.1.value || (y.1.value == x.1.value && y.0 < x.0) {
                    Some(y)
                } else {
                    Some(x)
                }
            }
        };
    }
    out
}

/// Backward robust value iteration over `k_stages` stages.
pub fn robust_value_iteration(
    model: &GameModel,
    initial: &HybridGameState,
    k_stages: usize,
    budget: u64,
) -> Result<SuboptimalResult> {
    if k_stages == 0 {
        return Err(GameError::InvalidArgument("horizon must be at least one stage".into()));
    }
    let (m, n) = (model.m(), model.n());
    let required = required_nodes(m * n, k_stages);
    check_budget(required, budget)?;
    let tree = build_tree(model, &initial.window, k_stages)?;

    let mut v_bar = vec![[0.0; 3]; k_stages];
    let mut strategies = vec![MixedStrategyProfile::uniform(m, n); k_stages];
    let mut argmax_histories = vec![[0usize; 3]; k_stages];
    let mut solve_count = 0;
    let mut nodes = 0;
    for d in (0..k_stages).rev() {
        // continuation Σ_h P(h | l) v̄_{d+1}(h), identical for every history
        let cont: [DMatrix<f64>; 3] = CyberMode::ALL.map(|source| {
            DMatrix::from_fn(m, n, |i, j| {
                if d + 1 == k_stages {
                    return 0.0;
                }
                let row = model.kernel.row(i, j, source);
                (0..3).map(|h| row[h] * v_bar[d + 1][h]).sum()
            })
        });
        let level = &tree.levels[d];
        let count = level.len() / tree.stride;
        nodes += count;
        let best = level
            .par_chunks(tree.stride)
            .enumerate()
            .map(|(idx, r)| -> Result<Best> {
                let safe = DMatrix::from_fn(m, n, |_, j| r[j]) + &cont[0];
                let attacked = DMatrix::from_fn(m, n, |i, j| r[n + i * n + j]) + &cont[1];
                let false_alarm = DMatrix::from_element(m, n, model.p_f) + &cont[2];
                Ok([
                    Some((idx, matrix_game::solve_zero_sum(&safe)?)),
                    Some((idx, matrix_game::solve_zero_sum(&attacked)?)),
                    Some((idx, matrix_game::solve_zero_sum(&false_alarm)?)),
                ])
            })
            .try_reduce(|| [None, None, None], |a, b| Ok(better(a, b)))?;
        solve_count += 3 * count;
        let mut f = Vec::with_capacity(3);
        let mut g = Vec::with_capacity(3);
        for (l, slot) in best.into_iter().enumerate() {
            let (idx, sol) = slot.expect("every stage has at least one history");
            v_bar[d][l] = sol.value;
            argmax_histories[d][l] = idx;
            f.push(sol.f_star);
            g.push(sol.g_star);
        }
        strategies[d] = MixedStrategyProfile {
            f: [f[0].clone(), f[1].clone(), f[2].clone()],
            g: [g[0].clone(), g[1].clone(), g[2].clone()],
        };
    }
    Ok(SuboptimalResult {
        v_bar,
        strategies,
        argmax_histories,
        solve_count,
        nodes,
    })
}

/// Realized total payoff of every pure attacker sequence (the same action in
/// every mode) against the system strategies of `strategies`.
pub fn pure_attacker_payoffs(
    model: &GameModel,
    initial: &HybridGameState,
    strategies: &[MixedStrategyProfile],
) -> Result<Vec<f64>> {
    let m = model.m();
    let k = strategies.len();
    let total = m.checked_pow(k as u32).ok_or_else(|| GameError::BudgetExceeded {
        required: (m as f64).powi(k as i32),
        budget: u64::MAX,
    })?;
    (0..total)
        .into_par_iter()
        .map(|code| {
            let mut rest = code;
            let mut seq = Vec::with_capacity(k);
            for profile in strategies {
                let i = rest % m;
                rest /= m;
                let mut pinned = profile.clone();
                for f in &mut pinned.f {
                    f.fill(0.0);
                    f[i] = 1.0;
                }
                seq.push(pinned);
            }
            Ok(game::evaluate_total_payoff(model, initial, &seq)?.total)
        })
        .collect()
}

/// True when the bound dominates every realized payoff up to `1e-9`.
pub fn upper_bound_certificate(v_bar_1: f64, realized: &[f64]) -> bool {
    realized.iter().all(|&r| v_bar_1 + 1e-9 >= r)
}

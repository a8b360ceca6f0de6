//! Finite zero-sum matrix games. The row player (attacker) maximizes and the
//! column player (system) minimizes `fᵀ Q g`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GameError, Result};
use crate::linalg;

/// Saddle-point tolerance.
pub const SADDLE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GameSolution {
    pub value: f64,
    pub f_star: DVector<f64>,
    pub g_star: DVector<f64>,
    /// `max_i (Q g)_i − min_j (fᵀ Q)_j`, never negative up to rounding.
    pub duality_gap: f64,
}

impl GameSolution {
    fn pure(value: f64, m: usize, n: usize, i: usize, j: usize) -> Self {
        let mut f = DVector::zeros(m);
        let mut g = DVector::zeros(n);
        f[i] = 1.0;
        g[j] = 1.0;
        Self {
            value,
            f_star: f,
            g_star: g,
            duality_gap: 0.0,
        }
    }
}

/// Upper and lower bounds implied by a strategy pair:
/// `(max_i (Q g)_i, min_j (fᵀ Q)_j)`.
pub fn strategy_bounds(q: &DMatrix<f64>, f: &DVector<f64>, g: &DVector<f64>) -> (f64, f64) {
    let upper = (q * g).max();
    let lower = (q.transpose() * f).min();
    (upper, lower)
}

/// Checks both one-sided saddle inequalities with absolute tolerance `eps`.
pub fn certificate_holds(q: &DMatrix<f64>, sol: &GameSolution, eps: f64) -> bool {
    let (upper, lower) = strategy_bounds(q, &sol.f_star, &sol.g_star);
    on_simplex(&sol.f_star) && on_simplex(&sol.g_star) && upper <= sol.value + eps && lower >= sol.value - eps
}

pub fn on_simplex(p: &DVector<f64>) -> bool {
    p.iter().all(|&x| x >= 0.0 && x.is_finite()) && (p.sum() - 1.0).abs() <= 1e-9
}

/// Solves `min_g max_f fᵀ Q g` through the standard linear program.
///
/// The matrix is shifted to strict positivity, the system's problem
/// `max 1ᵀy s.t. Q'y ≤ 1, y ≥ 0` is solved with a dense Bland-rule
/// simplex, and the attacker's strategy is read from the dual.
pub fn solve_zero_sum(q: &DMatrix<f64>) -> Result<GameSolution> {
    let (m, n) = q.shape();
    if m == 0 || n == 0 {
        return Err(GameError::DimensionMismatch(
            "matrix game needs at least one row and column".into(),
        ));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(GameError::InvalidArgument("matrix game entries must be finite".into()));
    }
    if let Some(sol) = pure_saddle(q) {
        return Ok(sol);
    }
    let scale = q.amax().max(1.0);
    let eps = SADDLE_EPS * scale;

    let first = simplex_solve(q, false)?;
    if certificate_holds(q, &first, eps) {
        return Ok(first);
    }
    // second attempt: rescale the game to unit magnitude and refactor the
    // final basis exactly
    let second = simplex_solve(q, true)?;
    if certificate_holds(q, &second, eps) {
        return Ok(second);
    }
    Err(GameError::NumericalFailure {
        gap: first.duality_gap.min(second.duality_gap),
    })
}

/// A saddle in pure strategies: an entry that is the minimum of its row and
/// the maximum of its column. Lexicographically first one wins.
fn pure_saddle(q: &DMatrix<f64>) -> Option<GameSolution> {
    let row_min: Vec<f64> = (0..q.nrows()).map(|i| q.row(i).min()).collect();
    let col_max: Vec<f64> = (0..q.ncols()).map(|j| q.column(j).max()).collect();
    let maximin = row_min.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let minimax = col_max.iter().copied().fold(f64::INFINITY, f64::min);
    if maximin != minimax {
        return None;
    }
    let i = row_min.iter().position(|&v| v == maximin)?;
    let j = col_max.iter().position(|&v| v == minimax)?;
    Some(GameSolution::pure(maximin, q.nrows(), q.ncols(), i, j))
}

fn simplex_solve(q: &DMatrix<f64>, normalized: bool) -> Result<GameSolution> {
    let (m, n) = q.shape();
    let min = q.min();
    let (offset, scale) = if normalized {
        // map entries into [1, 2]
        let range = (q.max() - min).max(f64::MIN_POSITIVE);
        (1.0 - min / range, range)
    } else if min <= 0.0 {
        (1.0 - min, 1.0)
    } else {
        (0.0, 1.0)
    };
    let shifted = q.map(|v| v / scale + offset);

    let cols = n + m + 1;
    let mut tab = DMatrix::<f64>::zeros(m + 1, cols);
    for i in 0..m {
        for j in 0..n {
            tab[(i, j)] = shifted[(i, j)];
        }
        tab[(i, n + i)] = 1.0;
        tab[(i, cols - 1)] = 1.0;
    }
    for j in 0..n {
        tab[(m, j)] = -1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_pivots = 50 * (m + n + 10);
    let mut pivots = 0;
    loop {
        let entering = (0..n + m).find(|&c| tab[(m, c)] < -1e-12);
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = tab[(r, e)];
            if a > 1e-12 {
                let ratio = tab[(r, cols - 1)] / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-12 || ((ratio - lratio).abs() <= 1e-12 && basis[r] < basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        let Some((lr, _)) = leave else {
            return Err(GameError::NumericalFailure { gap: f64::INFINITY });
        };
        pivot(&mut tab, lr, e);
        basis[lr] = e;
        pivots += 1;
        if pivots > max_pivots {
            return Err(GameError::NonConvergent {
                iterations: pivots,
                residual: f64::NAN,
            });
        }
    }

    let (y, x) = if normalized {
        refactor(&shifted, &basis)?
    } else {
        let mut y = DVector::zeros(n);
        for (r, &b) in basis.iter().enumerate() {
            if b < n {
                y[b] = tab[(r, cols - 1)].max(0.0);
            }
        }
        let x = DVector::from_fn(m, |i, _| tab[(m, n + i)].max(0.0));
        (y, x)
    };

    let sy = y.sum();
    let sx = x.sum();
    if !(sy > 0.0) || !(sx > 0.0) {
        return Err(GameError::NumericalFailure { gap: f64::INFINITY });
    }
    let g_star = &y / sy;
    let f_star = &x / sx;
    let (upper, lower) = strategy_bounds(q, &f_star, &g_star);
    let lp_value = (1.0 / sy - offset) * scale;
    // the certificate bounds bracket the LP value; clamp into them
    let value = lp_value.clamp(lower.min(upper), upper.max(lower));
    Ok(GameSolution {
        value,
        f_star,
        g_star,
        duality_gap: (upper - lower).max(0.0),
    })
}

fn pivot(tab: &mut DMatrix<f64>, row: usize, col: usize) {
    let p = tab[(row, col)];
    let width = tab.ncols();
    for c in 0..width {
        tab[(row, c)] /= p;
    }
    for r in 0..tab.nrows() {
        if r == row {
            continue;
        }
        let factor = tab[(r, col)];
        if factor == 0.0 {
            continue;
        }
        for c in 0..width {
            let delta = factor * tab[(row, c)];
            tab[(r, c)] -= delta;
        }
        tab[(r, col)] = 0.0;
    }
}

/// Recomputes primal and dual solutions for a basis directly from the
/// constraint matrix `[Q' | I]`.
fn refactor(shifted: &DMatrix<f64>, basis: &[usize]) -> Result<(DVector<f64>, DVector<f64>)> {
    let (m, n) = shifted.shape();
    let column = |c: usize| -> DVector<f64> {
        if c < n {
            shifted.column(c).into_owned()
        } else {
            let mut e = DVector::zeros(m);
            e[c - n] = 1.0;
            e
        }
    };
    let mut b_mat = DMatrix::<f64>::zeros(m, m);
    for (k, &c) in basis.iter().enumerate() {
        b_mat.set_column(k, &column(c));
    }
    let xb = linalg::solve_vec(&b_mat, &DVector::from_element(m, 1.0))?;
    let cb = DVector::from_fn(m, |k, _| if basis[k] < n { 1.0 } else { 0.0 });
    let duals = linalg::solve_vec(&b_mat.transpose(), &cb)?;
    let mut y = DVector::zeros(n);
    for (k, &c) in basis.iter().enumerate() {
        if c < n {
            y[c] = xb[k].max(0.0);
        }
    }
    Ok((y, duals.map(|v| v.max(0.0))))
}

/// Value of a game whose rows are all identical: the column player simply
/// picks the cheapest column.
pub fn value_identical_rows(q: &DMatrix<f64>) -> Option<f64> {
    let first = q.row(0);
    let same = (1..q.nrows()).all(|i| q.row(i) == first);
    same.then(|| first.min())
}

/// Alternating fictitious play. Intended as an independent oracle; the
/// reported value is the midpoint of the bounds implied by the empirical
/// strategies.
pub fn solve_zero_sum_reference(q: &DMatrix<f64>, iters: usize) -> GameSolution {
    let (m, n) = q.shape();
    let mut row_counts = vec![0usize; m];
    let mut col_counts = vec![0usize; n];
    // cumulative payoff of each row against the column history and of each
    // column against the row history
    let mut row_payoff = vec![0.0; m];
    let mut col_payoff = vec![0.0; n];
    let mut i = 0usize;
    for _ in 0..iters.max(1) {
        row_counts[i] += 1;
        for j in 0..n {
            col_payoff[j] += q[(i, j)];
        }
        let j = argmin(&col_payoff);
        col_counts[j] += 1;
        for r in 0..m {
            row_payoff[r] += q[(r, j)];
        }
        i = argmax(&row_payoff);
    }
    let total = iters.max(1) as f64;
    let f = DVector::from_iterator(m, row_counts.iter().map(|&c| c as f64 / total));
    let g = DVector::from_iterator(n, col_counts.iter().map(|&c| c as f64 / total));
    let (upper, lower) = strategy_bounds(q, &f, &g);
    GameSolution {
        value: 0.5 * (upper + lower),
        f_star: f,
        g_star: g,
        duality_gap: upper - lower,
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = k;
        }
    }
    best
}

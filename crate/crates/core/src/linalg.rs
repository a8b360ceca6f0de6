//! Small dense-matrix helpers shared by the control and game code.
//!
//! Everything here works on `nalgebra` dynamic matrices. The matrices in
//! this crate are tiny (state dimension 4, games up to ~12x12), so the
//! routines favour clarity and explicit failure over raw speed.

use nalgebra::{DMatrix, DVector};

use crate::error::{GameError, Result};

/// Relative pivot threshold below which a matrix is treated as singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Solves `A X = B` by LU decomposition with partial pivoting.
///
/// A pivot smaller than `PIVOT_TOL` times the largest magnitude in its
/// original row is reported as [`GameError::Singular`]; there is no silent
/// regularization.
pub fn lu_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(GameError::DimensionMismatch(format!(
            "lu_solve: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    // pivots are judged against the largest entry of their original row
    let mut scale: Vec<f64> = (0..n)
        .map(|i| lu.row(i).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .collect();

    for col in 0..n {
        let (pivot_row, _) = (col..n)
            .map(|r| (r, lu[(r, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_row != col {
            lu.swap_rows(pivot_row, col);
            x.swap_rows(pivot_row, col);
            scale.swap(pivot_row, col);
        }
        let pivot = lu[(col, col)];
        if scale[col] == 0.0 || pivot.abs() < PIVOT_TOL * scale[col] {
            return Err(GameError::Singular { row: col, pivot });
        }
        for r in (col + 1)..n {
            let factor = lu[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                lu[(r, c)] -= factor * lu[(col, c)];
            }
            for c in 0..x.ncols() {
                x[(r, c)] -= factor * x[(col, c)];
            }
        }
    }
    for col in (0..n).rev() {
        for c in 0..x.ncols() {
            let mut acc = x[(col, c)];
            for k in (col + 1)..n {
                acc -= lu[(col, k)] * x[(k, c)];
            }
            x[(col, c)] = acc / lu[(col, col)];
        }
    }
    Ok(x)
}

pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    lu_solve(a, &DMatrix::identity(a.nrows(), a.nrows()))
}

pub fn solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = lu_solve(a, &rhs)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

/// `(S + Sᵀ) / 2`
pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// Induced infinity norm (maximum absolute row sum).
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
///
/// The argument is scaled to norm at most 1/2 and the series is summed
/// until the next term drops below machine epsilon relative to the partial
/// sum, which keeps the squared result well inside a 1e-10 relative error.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = norm_inf(a);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a / 2f64.powi(squarings as i32);

    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..64 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if norm_inf(&term) <= f64::EPSILON * norm_inf(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Solves the discrete Lyapunov equation `X = F X Fᵀ + G` by the doubling
/// iteration. Requires `F` Schur stable.
pub fn solve_discrete_lyapunov(f: &DMatrix<f64>, g: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<DMatrix<f64>> {
    if !f.is_square() || f.shape() != g.shape() {
        return Err(GameError::DimensionMismatch(
            "lyapunov: F and G must be square and equal size".into(),
        ));
    }
    let mut x = g.clone();
    let mut a = f.clone();
    for it in 0..max_iter {
        let next = symmetrize(&(&x + &a * &x * a.transpose()));
        let delta = norm_inf(&(&next - &x));
        x = next;
        a = &a * &a;
        if delta <= tol * norm_inf(&x).max(1.0) {
            let residual = norm_inf(&(&x - (f * &x * f.transpose() + g)));
            if residual <= tol * norm_inf(&x).max(1.0) * 10.0 {
                return Ok(x);
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(GameError::NonConvergent {
                iterations: it + 1,
                residual: f64::INFINITY,
            });
        }
    }
    Err(GameError::NonConvergent {
        iterations: max_iter,
        residual: norm_inf(&(&x - (f * &x * f.transpose() + g))),
    })
}

/// Symmetric square root factor `F` with `F Fᵀ = S` for a PSD matrix,
/// clipping tiny negative eigenvalues to zero.
pub fn psd_factor(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(s).symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

pub fn quad_form(x: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (x.transpose() * m * x)[(0, 0)]
}

/// Builds a dense matrix from row-major nested vectors.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(GameError::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lu_solve_matches_known_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 7.0, 2.0, 6.0]);
        let inv = inverse(&a).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.6, -0.7, -0.2, 0.4]);
        assert_relative_eq!(inv, expected, epsilon = 1e-12);
    }

    #[test]
    fn lu_needs_pivoting() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let x = solve_vec(&a, &DVector::from_vec(vec![3.0, 5.0])).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![5.0, 3.0]), epsilon = 1e-14);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(inverse(&a), Err(GameError::Singular { .. })));
        let z = DMatrix::<f64>::zeros(3, 3);
        assert!(inverse(&z).is_err());
    }

    #[test]
    fn expm_scalar_and_diagonal() {
        let a = DMatrix::from_row_slice(1, 1, &[0.1]);
        assert_relative_eq!(expm(&a)[(0, 0)], 0.1f64.exp(), max_relative = 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -2.0, 0.0]));
        let e = expm(&d);
        assert_relative_eq!(e[(0, 0)], 3.0f64.exp(), max_relative = 1e-11);
        assert_relative_eq!(e[(1, 1)], (-2.0f64).exp(), max_relative = 1e-11);
        assert_relative_eq!(e[(2, 2)], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn expm_rotation() {
        let t = 2.5;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&a);
        let expected = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert_relative_eq!(e, expected, epsilon = 1e-10);
    }

    #[test]
    fn lyapunov_scalar() {
        let f = DMatrix::from_row_slice(1, 1, &[0.5]);
        let g = DMatrix::from_row_slice(1, 1, &[1.0]);
        let x = solve_discrete_lyapunov(&f, &g, 1e-13, 200).unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0 / 0.75, max_relative = 1e-12);
    }

    #[test]
    fn psd_factor_reconstructs() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = psd_factor(&s);
        assert_relative_eq!(&f * f.transpose(), s, epsilon = 1e-12);
        assert_eq!(psd_factor(&DMatrix::zeros(2, 2)), DMatrix::zeros(2, 2));
    }

    #[test]
    fn spectral_radius_of_rotation_block() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert_relative_eq!(spectral_radius(&m), 0.9, epsilon = 1e-12);
    }
}

//! Plant model, Riccati-based Kalman/LQR synthesis and zero-order-hold
//! discretization.

use nalgebra::{DMatrix, DVector};

use crate::error::{GameError, Result};
use crate::linalg::{self, inverse, norm_inf, symmetrize};

pub const DARE_TOL: f64 = 1e-10;
pub const DARE_MAX_ITER: usize = 10_000;

/// Discrete-time LTI plant `x⁺ = A x + B u + w`, `y = C x + v` with
/// `w ~ N(0, Q)`, `v ~ N(0, R)` and `x₀ ~ N(x0_mean, x0_cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub x0_mean: DVector<f64>,
    pub x0_cov: DMatrix<f64>,
}

impl PlantModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        measurement_noise: DMatrix<f64>,
        x0_mean: DVector<f64>,
        x0_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let plant = Self {
            a,
            b,
            c,
            process_noise,
            measurement_noise,
            x0_mean,
            x0_cov,
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Checks dimensions and covariance structure.
    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let m = self.c.nrows();
        let shape_ok = self.a.is_square()
            && self.b.nrows() == n
            && self.c.ncols() == n
            && self.process_noise.shape() == (n, n)
            && self.measurement_noise.shape() == (m, m)
            && self.x0_mean.len() == n
            && self.x0_cov.shape() == (n, n);
        if !shape_ok {
            return Err(GameError::DimensionMismatch(format!(
                "plant: A {:?}, B {:?}, C {:?}, Q {:?}, R {:?}, x0 {}, x0_cov {:?}",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.process_noise.shape(),
                self.measurement_noise.shape(),
                self.x0_mean.len(),
                self.x0_cov.shape()
            )));
        }
        for (name, cov) in [
            ("process noise", &self.process_noise),
            ("initial covariance", &self.x0_cov),
        ] {
            if !is_psd(cov) {
                return Err(GameError::InvalidArgument(format!(
                    "{name} must be symmetric positive semidefinite"
                )));
            }
        }
        if !linalg::is_symmetric(&self.measurement_noise, 1e-12) || self.measurement_noise.clone().cholesky().is_none()
        {
            return Err(GameError::InvalidArgument(
                "measurement noise must be symmetric positive definite".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn is_psd(m: &DMatrix<f64>) -> bool {
    if !linalg::is_symmetric(m, 1e-12) {
        return false;
    }
    let scale = m.amax().max(1.0);
    m.clone().symmetric_eigenvalues().iter().all(|&ev| ev >= -1e-12 * scale)
}

/// Quadratic cost weights `xᵀ W x + uᵀ U u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqgWeights {
    pub w: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

impl LqgWeights {
    pub fn new(w: DMatrix<f64>, u: DMatrix<f64>) -> Result<Self> {
        if !is_psd(&w) {
            return Err(GameError::InvalidArgument(
                "state weight W must be positive semidefinite".into(),
            ));
        }
        if !linalg::is_symmetric(&u, 1e-12) || u.clone().cholesky().is_none() {
            return Err(GameError::InvalidArgument(
                "input weight U must be positive definite".into(),
            ));
        }
        Ok(Self { w, u })
    }

    pub fn identity(n: usize, p: usize) -> Self {
        Self {
            w: DMatrix::identity(n, n),
            u: DMatrix::identity(p, p),
        }
    }
}

/// One application of the Riccati map
/// `f(S) = AᵀSA + Q − AᵀSB (BᵀSB + R)⁻¹ BᵀSA`.
pub fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let at_s = a.transpose() * s;
    let bt_s = b.transpose() * s;
    let gram = &bt_s * b + r;
    let coupling = &at_s * b;
    let correction = &coupling * inverse(&gram)? * coupling.transpose();
    Ok(symmetrize(&(at_s * a + q - correction)))
}

/// `‖S − f(S)‖_∞`, evaluated directly from the map.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<f64> {
    Ok(norm_inf(&(s - riccati_map(a, b, q, r, s)?)))
}

/// Solves the discrete algebraic Riccati equation. A structure-preserving
/// doubling iteration gives a starting point that plain iteration of
/// [`riccati_map`] then polishes until the residual is below `tol`; when
/// doubling breaks down, iteration starts from `S = Q` instead. The
/// tolerance is relative to `max(1, ‖S‖_∞)`.
///
/// For the filter equation pass `(Aᵀ, Cᵀ, Q, R)`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(GameError::DimensionMismatch(format!(
            "dare: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    if tol <= 0.0 {
        return Err(GameError::InvalidArgument("dare tolerance must be positive".into()));
    }
    let start = doubling(a, b, q, r, tol).unwrap_or_else(|| symmetrize(q));
    let mut s = start;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = riccati_map(a, b, q, r, &s)?;
        residual = norm_inf(&(&next - &s));
        s = next;
        if !residual.is_finite() {
            break;
        }
        let scale = norm_inf(&s).max(1.0);
        if residual <= tol * scale * 0.5 {
            let check = dare_residual(a, b, q, r, &s)?;
            if check <= tol * scale {
                return Ok(s);
            }
        }
    }
    Err(GameError::NonConvergent {
        iterations: max_iter,
        residual,
    })
}

fn doubling(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = symmetrize(&(b * inverse(r).ok()? * b.transpose()));
    let mut hk = symmetrize(q);
    for _ in 0..200 {
        let w = inverse(&(&eye + &gk * &hk)).ok()?;
        let a_next = &ak * &w * &ak;
        let g_next = symmetrize(&(&gk + &ak * &w * &gk * ak.transpose()));
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &w * &ak));
        let step = norm_inf(&(&h_next - &hk));
        if !step.is_finite() {
            return None;
        }
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if step <= tol * norm_inf(&hk).max(1.0) {
            return Some(hk);
        }
    }
    None
}

/// Steady-state Kalman filter quantities.
#[derive(Debug, Clone)]
pub struct KalmanDesign {
    /// Gain `K = P Cᵀ (C P Cᵀ + R)⁻¹`.
    pub gain: DMatrix<f64>,
    /// Prediction error covariance.
    pub prediction_cov: DMatrix<f64>,
    /// Innovation covariance `C P Cᵀ + R`.
    pub innovation_cov: DMatrix<f64>,
}

pub fn kalman_gain(plant: &PlantModel) -> Result<KalmanDesign> {
    let p = solve_dare(
        &plant.a.transpose(),
        &plant.c.transpose(),
        &plant.process_noise,
        &plant.measurement_noise,
        DARE_TOL,
        DARE_MAX_ITER,
    )?;
    let innovation_cov = symmetrize(&(&plant.c * &p * plant.c.transpose() + &plant.measurement_noise));
    let gain = &p * plant.c.transpose() * inverse(&innovation_cov)?;
    Ok(KalmanDesign {
        gain,
        prediction_cov: p,
        innovation_cov,
    })
}

/// LQR feedback `u = L x` with `L = −(BᵀSB + U)⁻¹ BᵀSA`.
pub fn lqr_gain(plant: &PlantModel, weights: &LqgWeights) -> Result<DMatrix<f64>> {
    let s = solve_dare(&plant.a, &plant.b, &weights.w, &weights.u, DARE_TOL, DARE_MAX_ITER)?;
    let gram = plant.b.transpose() * &s * &plant.b + &weights.u;
    Ok(-(inverse(&gram)? * plant.b.transpose() * &s * &plant.a))
}

/// Zero-order-hold discretization via the exponential of the augmented
/// matrix `[[A, B], [0, 0]] · Ts`.
pub fn discretize_zoh(a_cont: &DMatrix<f64>, b_cont: &DMatrix<f64>, ts: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_cont.nrows();
    let p = b_cont.ncols();
    if !a_cont.is_square() || b_cont.nrows() != n {
        return Err(GameError::DimensionMismatch(format!(
            "zoh: A {:?}, B {:?}",
            a_cont.shape(),
            b_cont.shape()
        )));
    }
    if !(ts > 0.0) {
        return Err(GameError::InvalidArgument("sampling period must be positive".into()));
    }
    let mut aug = DMatrix::<f64>::zeros(n + p, n + p);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_cont * ts));
    aug.view_mut((0, n), (n, p)).copy_from(&(b_cont * ts));
    let e = linalg::expm(&aug);
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, p)).into_owned()))
}

/// Stationary per-step cost `E[x̂ᵀWx̂ + uᵀUu]` of the no-attack loop with
/// filter gain `K`, feedback `L` and watermark covariance `watermark`.
///
/// The filtered estimate obeys `x̂ₖ = (A + BL) x̂ₖ₋₁ + B Δuₖ₋₁ + K zₖ` with
/// white innovations `zₖ`.
pub fn steady_state_stage_cost(
    plant: &PlantModel,
    weights: &LqgWeights,
    kalman: &KalmanDesign,
    feedback: &DMatrix<f64>,
    watermark: &DMatrix<f64>,
) -> Result<f64> {
    let closed = &plant.a + &plant.b * feedback;
    let kz = &kalman.gain * &kalman.innovation_cov * kalman.gain.transpose();
    let drive = symmetrize(&(kz + &plant.b * watermark * plant.b.transpose()));
    let cov = linalg::solve_discrete_lyapunov(&closed, &drive, 1e-13, 200)?;
    let state_term = (&weights.w * &cov).trace();
    let control_term = (feedback.transpose() * &weights.u * feedback * &cov).trace();
    let watermark_term = (&weights.u * watermark).trace();
    Ok(state_term + control_term + watermark_term)
}

/// The four-state batch reactor benchmark in continuous time `(A, B, C)`.
#[allow(clippy::approx_constant)]
pub fn batch_reactor_continuous() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.38, -0.2077, 6.715, -5.676, //
            -0.5814, -4.29, 0.0, 0.675, //
            1.067, 4.273, -6.654, 5.893, //
            0.048, 4.273, 1.343, -2.104,
        ],
    );
    let b = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 5.679, 0.0, 1.136, -3.14, 1.136, 0.0]);
    let c = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0, 0.0]);
    (a, b, c)
}

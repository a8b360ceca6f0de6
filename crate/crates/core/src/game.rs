//! Hybrid game state, stage payoffs and the strategy-weighted closed-loop
//! update.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::control::{LqgWeights, PlantModel};
use crate::detection::{CyberMode, TransitionKernel};
use crate::error::{GameError, Result};
use crate::linalg::quad_form;
use crate::sim::{self, AttackAction, EstimateWindow, NoiseMode, StageDynamicsResult, Subsystem};

/// Everything that stays fixed over a game: plant, action spaces, cost
/// weights, the false-alarm penalty and the mode transition kernel.
#[derive(Debug, Clone)]
pub struct GameModel {
    pub plant: PlantModel,
    pub subsystems: Vec<Subsystem>,
    pub attacks: Vec<AttackAction>,
    pub weights: LqgWeights,
    pub p_f: f64,
    pub kernel: TransitionKernel,
    watermark_energy: Vec<f64>,
}

impl GameModel {
    pub fn new(
        plant: PlantModel,
        subsystems: Vec<Subsystem>,
        attacks: Vec<AttackAction>,
        weights: LqgWeights,
        p_f: f64,
        kernel: TransitionKernel,
    ) -> Result<Self> {
        if subsystems.is_empty() || attacks.is_empty() {
            return Err(GameError::InvalidArgument("both action spaces must be nonempty".into()));
        }
        if attacks[0] != AttackAction::NoAttack {
            return Err(GameError::InvalidArgument(
                "the first attacker action must be NoAttack".into(),
            ));
        }
        if kernel.dims() != (attacks.len(), subsystems.len()) {
            return Err(GameError::DimensionMismatch(format!(
                "kernel is {:?}, action spaces are {}x{}",
                kernel.dims(),
                attacks.len(),
                subsystems.len()
            )));
        }
        if !(p_f >= 0.0 && p_f.is_finite()) {
            return Err(GameError::InvalidArgument("p_f must be finite and nonnegative".into()));
        }
        let (n, p) = (plant.state_dim(), plant.input_dim());
        if weights.w.shape() != (n, n) || weights.u.shape() != (p, p) {
            return Err(GameError::DimensionMismatch(
                "cost weights do not match the plant".into(),
            ));
        }
        kernel.validate()?;
        let watermark_energy = subsystems
            .iter()
            .map(|s| (&weights.u * &s.watermark_cov).trace())
            .collect();
        Ok(Self {
            plant,
            subsystems,
            attacks,
            weights,
            p_f,
            kernel,
            watermark_energy,
        })
    }

    /// Attacker action count `M`.
    pub fn m(&self) -> usize {
        self.attacks.len()
    }

    /// Subsystem count `N`.
    pub fn n(&self) -> usize {
        self.subsystems.len()
    }

    pub fn with_kernel(&self, kernel: TransitionKernel) -> Result<Self> {
        Self::new(
            self.plant.clone(),
            self.subsystems.clone(),
            self.attacks.clone(),
            self.weights.clone(),
            self.p_f,
            kernel,
        )
    }

    /// Expected quadratic cost of one expectation-mode step, including the
    /// watermark energy `tr(U 𝓛_j)`.
    pub fn step_cost(&self, j: usize, res: &StageDynamicsResult) -> f64 {
        quad_form(&res.filtered_estimate, &self.weights.w)
            + quad_form(&res.control, &self.weights.u)
            + self.watermark_energy[j]
    }

    pub fn expected_step(&self, window: &EstimateWindow, i: usize, j: usize) -> Result<StageDynamicsResult> {
        sim::step_dynamics::<ChaCha8Rng>(
            &self.plant,
            &self.subsystems[j],
            &self.attacks[i],
            window,
            &mut NoiseMode::Expectation,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridGameState {
    pub window: EstimateWindow,
    /// Distribution over (Safe, NoDetection, FalseAlarm).
    pub mode_dist: [f64; 3],
    pub stage: usize,
}

impl HybridGameState {
    pub fn new(window: EstimateWindow, mode_dist: [f64; 3]) -> Result<Self> {
        check_distribution(&mode_dist)?;
        Ok(Self {
            window,
            mode_dist,
            stage: 0,
        })
    }

    pub fn in_mode(window: EstimateWindow, mode: CyberMode) -> Self {
        let mut mode_dist = [0.0; 3];
        mode_dist[mode.index()] = 1.0;
        Self {
            window,
            mode_dist,
            stage: 0,
        }
    }
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(GameError::InvalidArgument(format!("{p:?} is not a probability vector")));
    }
    Ok(())
}

/// Mixed strategies of both players, one per cyber mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategyProfile {
    pub f: [DVector<f64>; 3],
    pub g: [DVector<f64>; 3],
}

impl MixedStrategyProfile {
    pub fn uniform(m: usize, n: usize) -> Self {
        let f = DVector::from_element(m, 1.0 / m as f64);
        let g = DVector::from_element(n, 1.0 / n as f64);
        Self {
            f: [f.clone(), f.clone(), f],
            g: [g.clone(), g.clone(), g],
        }
    }

    /// Both players pure in every mode.
    pub fn pure(m: usize, n: usize, i: usize, j: usize) -> Self {
        let mut f = DVector::zeros(m);
        let mut g = DVector::zeros(n);
        f[i] = 1.0;
        g[j] = 1.0;
        Self {
            f: [f.clone(), f.clone(), f],
            g: [g.clone(), g.clone(), g],
        }
    }

    /// Replaces the system's strategy with subsystem `j` in every mode.
    pub fn with_fixed_system(mut self, j: usize) -> Self {
        let n = self.g[0].len();
        for g in &mut self.g {
            *g = DVector::zeros(n);
            g[j] = 1.0;
        }
        self
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        for l in 0..3 {
            if self.f[l].len() != m || self.g[l].len() != n {
                return Err(GameError::DimensionMismatch(format!(
                    "strategy lengths {} and {} for a {m}x{n} game",
                    self.f[l].len(),
                    self.g[l].len()
                )));
            }
            check_distribution(self.f[l].as_slice())?;
            check_distribution(self.g[l].as_slice())?;
        }
        Ok(())
    }
}

/// Expectation-mode steps from one window: every attacked pair `(i, j)` and
/// the neutralized step `(NoAttack, j)` used in the Safe mode.
#[derive(Debug, Clone)]
pub struct StageSteps {
    pub attacked: Vec<StageDynamicsResult>,
    pub neutralized: Vec<StageDynamicsResult>,
    m: usize,
    n: usize,
}

impl StageSteps {
    pub fn compute(model: &GameModel, window: &EstimateWindow) -> Result<Self> {
        let (m, n) = (model.m(), model.n());
        let mut attacked = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                attacked.push(model.expected_step(window, i, j)?);
            }
        }
        // row 0 is NoAttack
        let neutralized = attacked[..n].to_vec();
        Ok(Self {
            attacked,
            neutralized,
            m,
            n,
        })
    }

    pub fn pair(&self, i: usize, j: usize) -> &StageDynamicsResult {
        &self.attacked[i * self.n + j]
    }

    /// Step result seen in `mode` under `(i, j)`.
    pub fn in_mode(&self, mode: CyberMode, i: usize, j: usize) -> &StageDynamicsResult {
        match mode {
            CyberMode::Safe => &self.neutralized[j],
            _ => self.pair(i, j),
        }
    }

    /// Payoff matrices for (Safe, NoDetection, FalseAlarm).
    pub fn payoffs(&self, model: &GameModel) -> [DMatrix<f64>; 3] {
        let safe_row: Vec<f64> = (0..self.n).map(|j| model.step_cost(j, &self.neutralized[j])).collect();
        let safe = DMatrix::from_fn(self.m, self.n, |_, j| safe_row[j]);
        let attacked = DMatrix::from_fn(self.m, self.n, |i, j| model.step_cost(j, self.pair(i, j)));
        let false_alarm = DMatrix::from_element(self.m, self.n, model.p_f);
        [safe, attacked, false_alarm]
    }
}

/// `r^{ij}(s_kl)` for a single pair and mode.
pub fn immediate_payoff(
    model: &GameModel,
    window: &EstimateWindow,
    mode: CyberMode,
    i: usize,
    j: usize,
) -> Result<f64> {
    Ok(match mode {
        CyberMode::FalseAlarm => model.p_f,
        CyberMode::Safe => model.step_cost(j, &model.expected_step(window, 0, j)?),
        CyberMode::NoDetection => model.step_cost(j, &model.expected_step(window, i, j)?),
    })
}

/// Payoff matrices for (Safe, NoDetection, FalseAlarm) at `window`.
pub fn build_stage_payoff(model: &GameModel, window: &EstimateWindow) -> Result<[DMatrix<f64>; 3]> {
    Ok(StageSteps::compute(model, window)?.payoffs(model))
}

/// Next-mode distribution `Σ_l p(l) f_lᵀ P_h g_l`.
pub fn next_mode_distribution(model: &GameModel, mode_dist: &[f64; 3], profile: &MixedStrategyProfile) -> [f64; 3] {
    let mut next = [0.0; 3];
    for mode in CyberMode::ALL {
        let l = mode.index();
        if mode_dist[l] == 0.0 {
            continue;
        }
        for i in 0..model.m() {
            for j in 0..model.n() {
                let w = mode_dist[l] * profile.f[l][i] * profile.g[l][j];
                if w == 0.0 {
                    continue;
                }
                let row = model.kernel.row(i, j, mode);
                for h in 0..3 {
                    next[h] += w * row[h];
                }
            }
        }
    }
    next
}

/// Expected stage cost `Σ_l p(l) f_lᵀ r_l g_l`.
pub fn expected_stage_cost(payoffs: &[DMatrix<f64>; 3], mode_dist: &[f64; 3], profile: &MixedStrategyProfile) -> f64 {
    (0..3)
        .filter(|&l| mode_dist[l] > 0.0)
        .map(|l| mode_dist[l] * (profile.f[l].transpose() * &payoffs[l] * &profile.g[l])[(0, 0)])
        .sum()
}

/// Advances the state one stage with every quantity averaged over the mode
/// distribution and both players' mixed strategies.
pub fn update_with_strategies(
    model: &GameModel,
    state: &HybridGameState,
    profile: &MixedStrategyProfile,
) -> Result<HybridGameState> {
    let steps = StageSteps::compute(model, &state.window)?;
    update_from_steps(model, state, profile, &steps)
}

pub fn update_from_steps(
    model: &GameModel,
    state: &HybridGameState,
    profile: &MixedStrategyProfile,
    steps: &StageSteps,
) -> Result<HybridGameState> {
    profile.validate(model.m(), model.n())?;
    let n_x = model.plant.state_dim();
    let n_y = model.plant.output_dim();
    let mut next_state = DVector::zeros(n_x);
    let mut next_prediction = DVector::zeros(n_x);
    let mut delivered = DVector::zeros(n_y);
    let mut next_output = DVector::zeros(n_y);
    for mode in CyberMode::ALL {
        let l = mode.index();
        let p = state.mode_dist[l];
        if p == 0.0 {
            continue;
        }
        for i in 0..model.m() {
            for j in 0..model.n() {
                let w = p * profile.f[l][i] * profile.g[l][j];
                if w == 0.0 {
                    continue;
                }
                let res = steps.in_mode(mode, i, j);
                next_state.axpy(w, &res.next_true_state, 1.0);
                next_prediction.axpy(w, &res.next_prediction, 1.0);
                delivered.axpy(w, &res.delivered_output, 1.0);
                next_output.axpy(w, &res.next_clean_output, 1.0);
            }
        }
    }
    let mixed = StageDynamicsResult {
        next_true_state: next_state,
        next_prediction,
        filtered_estimate: DVector::zeros(n_x),
        control: DVector::zeros(model.plant.input_dim()),
        residual: DVector::zeros(n_y),
        delivered_output: delivered,
        next_clean_output: next_output,
    };
    let mut window = state.window.clone();
    window.advance(&mixed);
    Ok(HybridGameState {
        window,
        mode_dist: next_mode_distribution(model, &state.mode_dist, profile),
        stage: state.stage + 1,
    })
}

/// Expected cost series and mode distributions of a strategy sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub total: f64,
    pub stage_costs: Vec<f64>,
    /// Mode distribution at the start of each stage.
    pub mode_dists: Vec<[f64; 3]>,
    pub final_state: HybridGameState,
}

/// Total expected payoff `R_K` of playing `strategies` from `initial`.
pub fn evaluate_total_payoff(
    model: &GameModel,
    initial: &HybridGameState,
    strategies: &[MixedStrategyProfile],
) -> Result<PolicyEvaluation> {
    let mut state = initial.clone();
    let mut stage_costs = Vec::with_capacity(strategies.len());
    let mut mode_dists = Vec::with_capacity(strategies.len());
    for profile in strategies {
        let steps = StageSteps::compute(model, &state.window)?;
        let payoffs = steps.payoffs(model);
        mode_dists.push(state.mode_dist);
        stage_costs.push(expected_stage_cost(&payoffs, &state.mode_dist, profile));
        state = update_from_steps(model, &state, profile, &steps)?;
    }
    Ok(PolicyEvaluation {
        total: stage_costs.iter().sum(),
        stage_costs,
        mode_dists,
        final_state: state,
    })
}

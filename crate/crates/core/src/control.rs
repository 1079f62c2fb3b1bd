//! Penalized HUM null controls for the frozen-drift Oseen system.
//!
//! For a drift `h` the control minimizes
//!
//! ```text
//! J_ε(v) = ½ Σ_n dt q_n w_v(t_n)² ‖v_n‖²_{L²(ω)} + (1/2ε) ‖y(T)‖²
//! ```
//!
//! and the optimum has the form `v_n = -w_v(t_n)⁻² 1_ω φ_n`, where `φ` solves
//! the discrete adjoint from the terminal datum `φ_T = y(T)/ε`. The solver
//! runs preconditioned conjugate gradient on `J_ε` restricted to controls of
//! that form, so it iterates on `φ_T` (one adjoint and one forward sweep per
//! iteration) while `J_ε` decreases monotonically.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::{
    simulate_adjoint, simulate_oseen_forced, ControlMask, ControlSignal, OseenDrift, TimeGrid,
    Trajectory,
};
use crate::error::{config_err, Error, Result};
use crate::spectral::{to_grid, to_spectral, Basis, SpectralField};

/// Weights are clipped to this value near the blow-up endpoints.
pub const WEIGHT_CAP: f64 = 1e12;

/// Largest basis accepted by the dense Gramian route.
pub const GRAMIAN_LIMIT: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    #[default]
    Uniform,
    /// `w(t) = exp(s / (t (T - t))^m)`
    CarlemanTime { s: f64, m: u32 },
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightSpec::Uniform => Ok(()),
            WeightSpec::CarlemanTime { s, m } => {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(config_err(
                        "control.weights.s",
                        format!("s = {s} must be positive"),
                    ));
                }
                if !(m == 1 || m == 2) {
                    return Err(config_err(
                        "control.weights.m",
                        format!("m = {m} must be 1 or 2"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Weight at time `t ∈ [0, T]`.
    pub fn eval(&self, t: f64, t_final: f64) -> f64 {
        match *self {
            WeightSpec::Uniform => 1.0,
            WeightSpec::CarlemanTime { s, m } => {
                let base = t * (t_final - t);
                if base <= 0.0 {
                    return WEIGHT_CAP;
                }
                let e = s / base.powi(m as i32);
                if e >= WEIGHT_CAP.ln() {
                    WEIGHT_CAP
                } else {
                    e.exp().min(WEIGHT_CAP)
                }
            }
        }
    }
}

/// Sampled state and control weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightProfile {
    pub grid: TimeGrid,
    pub w_y: Vec<f64>,
    pub w_v: Vec<f64>,
}

impl WeightProfile {
    /// `w_v(t_n)⁻²`
    pub fn inverse_square(&self, n: usize) -> f64 {
        let w = self.w_v[n];
        1.0 / (w * w)
    }
}

/// The time-only weight family uses the same profile for `w_y` and `w_v`.
pub fn make_weights(spec: WeightSpec, g: TimeGrid) -> Result<WeightProfile> {
    spec.validate()?;
    let w: Vec<f64> = (0..g.len())
        .map(|n| spec.eval(g.time(n), g.t_final()))
        .collect();
    Ok(WeightProfile {
        grid: g,
        w_y: w.clone(),
        w_v: w,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumConfig {
    pub epsilon: f64,
    pub cg_tol: f64,
    pub cg_max: usize,
    pub weights: WeightSpec,
}

impl Default for HumConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            cg_tol: 1e-10,
            cg_max: 500,
            weights: WeightSpec::Uniform,
        }
    }
}

impl HumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(config_err(
                "control.epsilon",
                format!("epsilon = {} must lie in (0, 1]", self.epsilon),
            ));
        }
        if !(1e-14..=1e-2).contains(&self.cg_tol) {
            return Err(config_err(
                "control.cg_tol",
                format!("cg_tol = {} must lie in [1e-14, 1e-2]", self.cg_tol),
            ));
        }
        if self.cg_max == 0 {
            return Err(config_err("control.cg_max", "cg_max must be positive"));
        }
        self.weights.validate()
    }
}

/// Output of [`hum_solve`] and [`gramian_control`].
#[derive(Clone, Debug)]
pub struct HumResult {
    pub v: ControlSignal,
    /// `‖y(T)‖` from a fresh forward run with `v`.
    pub terminal_norm: f64,
    pub cg_iters: usize,
    /// `J_ε(v)`
    pub cost: f64,
    pub converged: bool,
    /// Terminal adjoint datum `φ_T`.
    pub phi_terminal: SpectralField,
    /// Adjoint trajectory `φ` generating `v`.
    pub adjoint: Trajectory,
    /// Controlled Oseen trajectory.
    pub state: Trajectory,
    /// `J_ε` per CG iterate, starting from `v = 0`.
    pub cost_history: Vec<f64>,
    /// `‖y(T)‖` per CG iterate, starting from `v = 0`.
    pub terminal_history: Vec<f64>,
}

/// Control-to-state machinery for one drift, mask and weight profile.
pub(crate) struct ControlProblem<'a> {
    basis: Arc<Basis>,
    drift: &'a OseenDrift,
    mask: &'a ControlMask,
    mask_sq: Vec<f64>,
    weights: WeightProfile,
    grid: TimeGrid,
}

impl<'a> ControlProblem<'a> {
    pub(crate) fn new(
        basis: &Arc<Basis>,
        drift: &'a OseenDrift,
        mask: &'a ControlMask,
        weights: WeightSpec,
        grid: TimeGrid,
    ) -> Result<Self> {
        if mask.n() != basis.grid_size() {
            return Err(Error::Length {
                expected: basis.grid_size(),
                got: mask.n(),
            });
        }
        Ok(Self {
            basis: Arc::clone(basis),
            drift,
            mask,
            mask_sq: mask.squared(),
            weights: make_weights(weights, grid)?,
            grid,
        })
    }

    /// Spectral forcing `P(1_ω v_n)` of `v_n = -w_v⁻² 1_ω φ_n`.
    fn forcing_from_adjoint(&self, adjoint: &Trajectory) -> Vec<SpectralField> {
        adjoint
            .states()
            .iter()
            .enumerate()
            .map(|(n, p)| {
                let g = to_grid(p).masked(&self.mask_sq);
                let mut f = to_spectral(&g, &self.basis).expect("finite adjoint");
                f.scale(-self.weights.inverse_square(n));
                f
            })
            .collect()
    }

    fn adjoint(&self, phi_t: &SpectralField) -> Result<Trajectory> {
        simulate_adjoint(phi_t, self.drift, self.grid)
    }

    /// `G φ_T`, the Gramian action (so that `y(T) = y_free(T) - G φ_T`).
    fn gramian_apply(&self, phi_t: &SpectralField) -> Result<SpectralField> {
        let adj = self.adjoint(phi_t)?;
        let forcing = self.forcing_from_adjoint(&adj);
        let zero = SpectralField::zeros(&self.basis);
        let y = simulate_oseen_forced(&zero, self.drift, Some(&forcing), self.grid)?;
        Ok(y.terminal().scaled(-1.0))
    }

    fn free_run(&self, y0: &SpectralField, extra: Option<&[SpectralField]>) -> Result<Trajectory> {
        simulate_oseen_forced(y0, self.drift, extra, self.grid)
    }

    /// Materializes the control and the controlled state for `φ_T`.
    fn finish(
        &self,
        y0: &SpectralField,
        extra: Option<&[SpectralField]>,
        phi_t: SpectralField,
        epsilon: f64,
    ) -> Result<(ControlSignal, Trajectory, Trajectory, f64)> {
        let adjoint = self.adjoint(&phi_t)?;
        let samples = adjoint
            .states()
            .iter()
            .enumerate()
            .map(|(n, p)| {
                let mut g = to_grid(p).masked(self.mask.values());
                g.scale(-self.weights.inverse_square(n));
                g
            })
            .collect();
        let v = ControlSignal::new(self.grid, samples, self.mask)?;
        let mut forcing = v.forcing(&self.basis);
        if let Some(extra) = extra {
            for (f, e) in forcing.iter_mut().zip(extra) {
                f.axpy(1.0, e);
            }
        }
        let state = simulate_oseen_forced(y0, self.drift, Some(&forcing), self.grid)?;
        let dt = self.grid.dt();
        let control_energy: f64 = v
            .samples()
            .iter()
            .enumerate()
            .map(|(n, s)| dt * self.grid.weight(n) * self.weights.w_v[n].powi(2) * s.dot(s))
            .sum();
        let cost = 0.5 * control_energy + state.terminal().norm().powi(2) / (2.0 * epsilon);
        Ok((v, adjoint, state, cost))
    }
}

/// Penalized HUM control by conjugate gradient on the terminal adjoint datum.
pub fn hum_solve(
    y0: &SpectralField,
    h: &OseenDrift,
    cfg: &HumConfig,
    mask: &ControlMask,
    g: TimeGrid,
) -> Result<HumResult> {
    hum_solve_forced(y0, h, None, cfg, mask, g)
}

/// [`hum_solve`] for the Oseen system with an additional known forcing.
pub fn hum_solve_forced(
    y0: &SpectralField,
    h: &OseenDrift,
    extra: Option<&[SpectralField]>,
    cfg: &HumConfig,
    mask: &ControlMask,
    g: TimeGrid,
) -> Result<HumResult> {
    hum_solve_warm(y0, h, extra, cfg, mask, g, None)
}

/// [`hum_solve_forced`] starting the iteration from the adjoint datum
/// `warm`. The stopping rule is measured against the cold-start residual,
/// so a good guess ends the iteration early without loosening it.
pub fn hum_solve_warm(
    y0: &SpectralField,
    h: &OseenDrift,
    extra: Option<&[SpectralField]>,
    cfg: &HumConfig,
    mask: &ControlMask,
    g: TimeGrid,
    warm: Option<&SpectralField>,
) -> Result<HumResult> {
    cfg.validate()?;
    let basis = y0.basis();
    let problem = ControlProblem::new(basis, h, mask, cfg.weights, g)?;
    let eps = cfg.epsilon;
    let free = problem.free_run(y0, extra)?;
    let y_free = free.terminal().clone();
    let zero = SpectralField::zeros(basis);
    if y_free.norm() == 0.0 {
        return Ok(HumResult {
            v: ControlSignal::zeros(g, mask),
            terminal_norm: 0.0,
            cg_iters: 0,
            cost: 0.0,
            converged: true,
            phi_terminal: zero.clone(),
            adjoint: Trajectory::zeros(basis, g),
            state: free,
            cost_history: vec![0.0],
            terminal_history: vec![0.0],
        });
    }

    // u: current φ_T, gu = G u, rho = u - (y_free - G u)/ε: primal
    // gradient in adjoint coordinates.
    let cold = y_free.scaled(-1.0 / eps);
    let g_cold = problem.gramian_apply(&cold)?;
    let rz0 = cold.dot(&g_cold);
    let (mut u, mut gu, mut rho, mut g_rho) = match warm.filter(|w| w.norm() > 0.0) {
        Some(w) => {
            let gw = problem.gramian_apply(w)?;
            let mut rho = w.clone();
            rho.axpy(1.0 / eps, &gw.sub(&y_free));
            let g_rho = problem.gramian_apply(&rho)?;
            (w.clone(), gw, rho, g_rho)
        }
        None => (zero.clone(), zero.clone(), cold, g_cold),
    };
    let mut rz = rho.dot(&g_rho);
    let mut delta = rho.scaled(-1.0);
    let mut g_delta = g_rho.scaled(-1.0);
    let start_terminal = y_free.sub(&gu);
    let mut cost_history = vec![0.5 * u.dot(&gu) + start_terminal.norm().powi(2) / (2.0 * eps)];
    let mut terminal_history = vec![start_terminal.norm()];
    let mut iters = 0;
    let mut converged = rz.max(0.0).sqrt() <= cfg.cg_tol * rz0.sqrt();
    while !converged && iters < cfg.cg_max {
        let curvature = delta.dot(&g_delta) + g_delta.norm().powi(2) / eps;
        if curvature <= 0.0 {
            converged = true;
            break;
        }
        let step = rz / curvature;
        u.axpy(step, &delta);
        gu.axpy(step, &g_delta);
        let mut update = delta.clone();
        update.axpy(1.0 / eps, &g_delta);
        rho.axpy(step, &update);
        iters += 1;

        let terminal = y_free.sub(&gu);
        cost_history.push(0.5 * u.dot(&gu) + terminal.norm().powi(2) / (2.0 * eps));
        terminal_history.push(terminal.norm());

        g_rho = problem.gramian_apply(&rho)?;
        let rz_new = rho.dot(&g_rho);
        if rz_new.max(0.0).sqrt() <= cfg.cg_tol * rz0.sqrt() {
            converged = true;
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        delta.scale(beta);
        delta.axpy(-1.0, &rho);
        g_delta.scale(beta);
        g_delta.axpy(-1.0, &g_rho);
    }

    let (v, adjoint, state, cost) = problem.finish(y0, extra, u.clone(), eps)?;
    Ok(HumResult {
        terminal_norm: state.terminal().norm(),
        v,
        cg_iters: iters,
        cost,
        converged,
        phi_terminal: u,
        adjoint,
        state,
        cost_history,
        terminal_history,
    })
}

/// Dense controllability Gramian `G` of the weighted control-to-terminal map.
pub struct Gramian {
    pub matrix: DMatrix<f64>,
}

impl Gramian {
    pub fn assemble(
        h: &OseenDrift,
        mask: &ControlMask,
        weights: WeightSpec,
        g: TimeGrid,
    ) -> Result<Self> {
        let basis = h.basis();
        let m = basis.len();
        if m > GRAMIAN_LIMIT {
            return Err(Error::BasisTooLarge {
                size: m,
                limit: GRAMIAN_LIMIT,
            });
        }
        let problem = ControlProblem::new(basis, h, mask, weights, g)?;
        let columns: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut e = SpectralField::zeros(basis);
                e.coeffs_mut()[j] = 1.0;
                problem.gramian_apply(&e).map(SpectralField::into_coeffs)
            })
            .collect::<Result<_>>()?;
        let matrix = DMatrix::from_fn(m, m, |i, j| columns[j][i]);
        Ok(Self { matrix })
    }

    /// `‖G - Gᵀ‖_max`
    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        sym.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Dense-oracle solution of the same penalized problem as [`hum_solve`]:
/// `(G + εI) φ_T = y_free(T)`.
pub fn gramian_control(
    y0: &SpectralField,
    h: &OseenDrift,
    epsilon: f64,
    weights: WeightSpec,
    mask: &ControlMask,
    g: TimeGrid,
) -> Result<HumResult> {
    gramian_control_forced(y0, h, None, epsilon, weights, mask, g)
}

pub fn gramian_control_forced(
    y0: &SpectralField,
    h: &OseenDrift,
    extra: Option<&[SpectralField]>,
    epsilon: f64,
    weights: WeightSpec,
    mask: &ControlMask,
    g: TimeGrid,
) -> Result<HumResult> {
    if !(epsilon > 0.0) {
        return Err(config_err("control.epsilon", "epsilon must be positive"));
    }
    let basis = y0.basis();
    let gram = Gramian::assemble(h, mask, weights, g)?;
    let asym = gram.asymmetry();
    let scale = gram.matrix.amax().max(f64::MIN_POSITIVE);
    if asym > 1e-10 * scale.max(1.0) {
        return Err(Error::Property(format!("Gramian asymmetry {asym:e}")));
    }
    let min_eig = gram.min_eigenvalue();
    if min_eig < -1e-12 * scale.max(1.0) {
        return Err(Error::Property(format!(
            "Gramian eigenvalue {min_eig:e} < 0"
        )));
    }
    let problem = ControlProblem::new(basis, h, mask, weights, g)?;
    let free = problem.free_run(y0, extra)?;
    let y_free = DVector::from_column_slice(free.terminal().coeffs());
    let m = basis.len();
    let sym = (&gram.matrix + gram.matrix.transpose()) * 0.5 + DMatrix::identity(m, m) * epsilon;
    let phi = sym
        .cholesky()
        .ok_or_else(|| Error::Property("G + εI is not positive definite".into()))?
        .solve(&y_free);
    let phi_t = SpectralField::from_coeffs(basis, phi.iter().copied().collect())?;
    let (v, adjoint, state, cost) = problem.finish(y0, extra, phi_t.clone(), epsilon)?;
    Ok(HumResult {
        terminal_norm: state.terminal().norm(),
        v,
        cg_iters: 0,
        cost,
        converged: true,
        phi_terminal: phi_t,
        adjoint,
        state,
        cost_history: Vec::new(),
        terminal_history: Vec::new(),
    })
}

fn serialize_fitted<S: Serializer>(k: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if k.is_finite() {
        s.serialize_f64(*k)
    } else {
        s.serialize_str("unbounded-below")
    }
}

/// Empirical constant in `‖v‖_{L∞(L²(ω))} ≤ e^{K(1 + ‖h‖²_∞)} ‖y_0‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControlBoundReport {
    pub linf_l2_norm: f64,
    pub drift_sup: f64,
    /// `-∞` when the control vanishes.
    #[serde(serialize_with = "serialize_fitted")]
    pub fitted_k: f64,
}

pub fn control_bound_report(
    v: &ControlSignal,
    h: &OseenDrift,
    y0: &SpectralField,
) -> Result<ControlBoundReport> {
    let y0_norm = y0.norm();
    if y0_norm <= 0.0 {
        return Err(config_err(
            "initial_condition",
            "control bound needs ‖y0‖ > 0",
        ));
    }
    let linf = v.linf_l2();
    let drift_sup = h.sup_norm();
    let fitted_k = if linf == 0.0 {
        f64::NEG_INFINITY
    } else {
        (linf / y0_norm).ln() / (1.0 + drift_sup * drift_sup)
    };
    Ok(ControlBoundReport {
        linf_l2_norm: linf,
        drift_sup,
        fitted_k,
    })
}

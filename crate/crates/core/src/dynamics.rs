//! Time integration of the semi-Galerkin Leray-α system, the frozen-drift
//! Oseen system and its discrete adjoint.
//!
//! Every step is kick / Crank–Nicolson / kick:
//!
//! ```text
//! y⁻      = y_n + dt/2 f_n
//! y⁺ + dt/2 A y⁺ + dt B(h, ½(y⁻ + y⁺)) = y⁻ - dt/2 A y⁻
//! y_{n+1} = y⁺ + dt/2 f_{n+1}
//! ```
//!
//! with `B(h, y) = P((h·∇) y)` evaluated at the step midpoint and solved by
//! predictor–corrector sweeps to round-off. Because `B(h, ·)` is exactly skew
//! on the dealiased basis, the linear part conserves the discrete energy
//! identity and the adjoint sweep below is the exact transpose, so
//! `(y_M, φ_M) - (y_0, φ_0) = Σ_n dt q_n (f_n, φ_n)` with trapezoid weights
//! `q_n`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{config_err, Error, Result};
use crate::filter::{apply_filter, FilterParams};
use crate::spectral::{
    same_basis, sobolev_norm, to_grid, to_spectral, Basis, GridField, SpectralField,
};

/// Blow-up guard: `‖y_n‖` may not exceed this multiple of `‖y_0‖`.
pub const BLOW_UP_FACTOR: f64 = 1e6;

const SWEEP_TOL: f64 = 1e-15;
const SWEEP_MAX: usize = 100;

/// Uniform discretization of `[0, T]` with `M` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(config_err(
                "time.t_final",
                format!("horizon {t_final} must be positive"),
            ));
        }
        if steps < 2 {
            return Err(config_err(
                "time.steps",
                format!("{steps} steps; need at least 2"),
            ));
        }
        Ok(Self { t_final, steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.t_final
        } else {
            n as f64 * self.dt()
        }
    }

    /// Trapezoid quadrature weight of sample `n` (without `dt`).
    pub fn weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.steps {
            0.5
        } else {
            1.0
        }
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Time-sampled states `y_0, …, y_M` on one basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    states: Vec<SpectralField>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, states: Vec<SpectralField>) -> Result<Self> {
        if states.len() != grid.len() {
            return Err(Error::Length {
                expected: grid.len(),
                got: states.len(),
            });
        }
        let basis = states[0].basis();
        if states.iter().any(|s| !same_basis(s.basis(), basis)) {
            return Err(Error::BasisMismatch);
        }
        Ok(Self { grid, states })
    }

    pub fn zeros(basis: &Arc<Basis>, grid: TimeGrid) -> Self {
        Self {
            grid,
            states: vec![SpectralField::zeros(basis); grid.len()],
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn basis(&self) -> &Arc<Basis> {
        self.states[0].basis()
    }

    pub fn states(&self) -> &[SpectralField] {
        &self.states
    }

    pub fn into_states(self) -> Vec<SpectralField> {
        self.states
    }

    pub fn state(&self, n: usize) -> &SpectralField {
        &self.states[n]
    }

    pub fn initial(&self) -> &SpectralField {
        &self.states[0]
    }

    pub fn terminal(&self) -> &SpectralField {
        &self.states[self.grid.steps]
    }

    pub fn map(&self, f: impl Fn(&SpectralField) -> SpectralField) -> Trajectory {
        Trajectory {
            grid: self.grid,
            states: self.states.iter().map(f).collect(),
        }
    }

    /// `max_n ‖a_n - b_n‖`
    pub fn c0_distance(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.sub(b).norm())
            .fold(0.0, f64::max)
    }

    /// `‖a - b‖_{L²(0,T; L²)}` by trapezoid quadrature.
    pub fn l2q_distance(&self, other: &Trajectory) -> f64 {
        let dt = self.grid.dt();
        self.states
            .iter()
            .zip(&other.states)
            .enumerate()
            .map(|(n, (a, b))| dt * self.grid.weight(n) * a.sub(b).norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `max_n f(y_n)`
    pub fn sup_of(&self, f: impl Fn(&SpectralField) -> f64) -> f64 {
        self.states.iter().map(f).fold(0.0, f64::max)
    }
}

/// Indicator of the control region `ω` on the grid, optionally with a
/// smoothstep roll-off of width `rolloff` inside the rectangle edges.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlMask {
    n: usize,
    values: Vec<f64>,
}

impl ControlMask {
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Length {
                expected: n * n,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(config_err("control.rect", "mask values must lie in [0, 1]"));
        }
        if !values.iter().any(|&v| v > 0.0) {
            return Err(config_err(
                "control.rect",
                "control region contains no grid point",
            ));
        }
        Ok(Self { n, values })
    }

    pub fn full(n: usize) -> Self {
        Self {
            n,
            values: vec![1.0; n * n],
        }
    }

    /// `[x0, x1] × [y0, y1] ⊂ [0, 2π]²`.
    pub fn rectangle(n: usize, rect: [f64; 4], rolloff: f64) -> Result<Self> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let [x0, x1, y0, y1] = rect;
        if !(0.0 <= x0 && x0 < x1 && x1 <= two_pi && 0.0 <= y0 && y0 < y1 && y1 <= two_pi) {
            return Err(config_err(
                "control.rect",
                format!("invalid rectangle {rect:?}"),
            ));
        }
        if !(rolloff >= 0.0 && rolloff.is_finite()) {
            return Err(config_err("control.rolloff", "roll-off width must be >= 0"));
        }
        let profile = |x: f64, a: f64, b: f64| {
            if x < a || x > b {
                0.0
            } else if rolloff == 0.0 {
                1.0
            } else {
                let t = ((x - a).min(b - x) / rolloff).min(1.0);
                t * t * (3.0 - 2.0 * t)
            }
        };
        let h = two_pi / n as f64;
        let mut values = vec![0.0; n * n];
        for j1 in 0..n {
            for j2 in 0..n {
                values[j1 * n + j2] =
                    profile(j1 as f64 * h, x0, x1) * profile(j2 as f64 * h, y0, y1);
            }
        }
        Self::from_values(n, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Fraction of grid points inside the support.
    pub fn coverage(&self) -> f64 {
        self.values.iter().filter(|&&v| v > 0.0).count() as f64 / self.values.len() as f64
    }

    pub fn squared(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * v).collect()
    }

    /// `P(mask · g)` on `basis`.
    pub fn project(&self, g: &GridField, basis: &Arc<Basis>) -> SpectralField {
        to_spectral(&g.masked(&self.values), basis).expect("finite masked field")
    }
}

/// Time-sampled physical control, vanishing off the mask support.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    grid: TimeGrid,
    samples: Vec<GridField>,
    mask: ControlMask,
}

impl ControlSignal {
    pub fn zeros(grid: TimeGrid, mask: &ControlMask) -> Self {
        Self {
            grid,
            samples: vec![GridField::zeros(mask.n()); grid.len()],
            mask: mask.clone(),
        }
    }

    pub fn new(grid: TimeGrid, samples: Vec<GridField>, mask: &ControlMask) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::Length {
                expected: grid.len(),
                got: samples.len(),
            });
        }
        let n = mask.n();
        let m = n * n;
        for s in &samples {
            if s.n() != n {
                return Err(Error::Length {
                    expected: n,
                    got: s.n(),
                });
            }
            if !s.is_finite() {
                return Err(Error::NonFinite("control sample".into()));
            }
            let own = s.sup_norm();
            let off = (0..m)
                .filter(|&i| mask.values[i] == 0.0)
                .map(|i| s.component(0)[i].hypot(s.component(1)[i]))
                .fold(0.0, f64::max);
            if off > 1e-12 * own {
                return Err(Error::Property(format!(
                    "control does not vanish off the control region ({off:e} vs {own:e})"
                )));
            }
        }
        Ok(Self {
            grid,
            samples,
            mask: mask.clone(),
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn samples(&self) -> &[GridField] {
        &self.samples
    }

    pub fn mask(&self) -> &ControlMask {
        &self.mask
    }

    /// Spectral forcing `P(mask · v_n)` per sample.
    pub fn forcing(&self, basis: &Arc<Basis>) -> Vec<SpectralField> {
        self.samples
            .iter()
            .map(|v| self.mask.project(v, basis))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.data().iter().all(|&x| x == 0.0))
    }

    /// `max_n ‖v_n‖_{L²(ω)}` (mean-normalized).
    pub fn linf_l2(&self) -> f64 {
        self.samples.iter().map(|s| s.l2_norm()).fold(0.0, f64::max)
    }

    /// `‖v‖_{L²(ω × (0,T))}` by trapezoid quadrature.
    pub fn l2_l2(&self) -> f64 {
        let dt = self.grid.dt();
        self.samples
            .iter()
            .enumerate()
            .map(|(n, s)| dt * self.grid.weight(n) * s.dot(s))
            .sum::<f64>()
            .sqrt()
    }

    /// Concatenates `self` on `[0, T0]` with `later` on `[T0, T0 + T]`.
    pub fn concat(&self, later: &ControlSignal) -> Result<ControlSignal> {
        let grid = TimeGrid::new(
            self.grid.t_final + later.grid.t_final,
            self.grid.steps + later.grid.steps,
        )?;
        let mut samples = self.samples[..self.grid.steps].to_vec();
        samples.extend(later.samples.iter().cloned());
        Ok(ControlSignal {
            grid,
            samples,
            mask: later.mask.clone(),
        })
    }
}

/// Externally prescribed transport field `h` of the Oseen system.
#[derive(Clone, Debug, PartialEq)]
pub struct OseenDrift {
    grid: TimeGrid,
    fields: Vec<SpectralField>,
}

impl OseenDrift {
    pub fn new(grid: TimeGrid, fields: Vec<SpectralField>) -> Result<Self> {
        let t = Trajectory::new(grid, fields)?;
        if t.states.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("drift".into()));
        }
        Ok(Self {
            grid,
            fields: t.states,
        })
    }

    pub fn zeros(basis: &Arc<Basis>, grid: TimeGrid) -> Self {
        Self {
            grid,
            fields: vec![SpectralField::zeros(basis); grid.len()],
        }
    }

    /// `h = filter(y)` along a trajectory.
    pub fn filtered(tr: &Trajectory, p: FilterParams) -> Self {
        Self::from_trajectory(tr, |y| apply_filter(y, p))
    }

    pub fn from_trajectory(
        tr: &Trajectory,
        closure: impl Fn(&SpectralField) -> SpectralField,
    ) -> Self {
        Self {
            grid: tr.grid,
            fields: tr.states.iter().map(closure).collect(),
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn fields(&self) -> &[SpectralField] {
        &self.fields
    }

    pub fn basis(&self) -> &Arc<Basis> {
        self.fields[0].basis()
    }

    pub fn sup_norm(&self) -> f64 {
        self.fields
            .iter()
            .map(|h| to_grid(h).sup_norm())
            .fold(0.0, f64::max)
    }

    /// `max_n ‖h_n‖` in `L²`.
    pub fn sup_l2(&self) -> f64 {
        self.fields.iter().map(|h| h.norm()).fold(0.0, f64::max)
    }

    fn midpoint(&self, n: usize) -> SpectralField {
        self.fields[n].lerp(&self.fields[n + 1], 0.5)
    }
}

/// `P((z·∇) y)` on the basis of `y`, computed pseudospectrally.
pub fn advect(z: &SpectralField, y: &SpectralField) -> SpectralField {
    assert!(
        same_basis(z.basis(), y.basis()),
        "fields live on different bases"
    );
    advect_grid(&to_grid(z), y)
}

/// Advection by a drift that is already rendered on the grid.
pub(crate) fn advect_grid(zg: &GridField, y: &SpectralField) -> SpectralField {
    let basis = y.basis();
    let grad = basis.gradient_grid(y.coeffs());
    let (z1, z2) = (zg.component(0), zg.component(1));
    let comps = [0, 1].map(|i| {
        grad[i][0]
            .iter()
            .zip(&grad[i][1])
            .zip(z1.iter().zip(z2))
            .map(|((d1, d2), (a, b))| a * d1 + b * d2)
            .collect::<Vec<f64>>()
    });
    SpectralField::from_coeffs(basis, basis.project_grid_components(comps))
        .expect("finite advection")
}

/// Diagonal Crank–Nicolson factors for one step size.
struct CrankNicolson {
    dt: f64,
    explicit: Vec<f64>,
    implicit_inv: Vec<f64>,
}

impl CrankNicolson {
    fn new(basis: &Basis, dt: f64) -> Self {
        let h = 0.5 * dt;
        Self {
            dt,
            explicit: basis.eigenvalues().iter().map(|l| 1.0 - h * l).collect(),
            implicit_inv: basis
                .eigenvalues()
                .iter()
                .map(|l| 1.0 / (1.0 + h * l))
                .collect(),
        }
    }

    fn mul(diag: &[f64], u: &SpectralField) -> SpectralField {
        let mut out = u.clone();
        out.coeffs_mut()
            .iter_mut()
            .zip(diag)
            .for_each(|(a, d)| *a *= d);
        out
    }

    /// Solves `(I + dt/2 A) y⁺ + dt adv(½(y⁻ + y⁺)) = (I - dt/2 A) y⁻`.
    fn forward(
        &self,
        y_minus: &SpectralField,
        mut adv: impl FnMut(&SpectralField) -> Result<SpectralField>,
    ) -> std::result::Result<SpectralField, String> {
        let rhs = Self::mul(&self.explicit, y_minus);
        let mut y_plus = y_minus.clone();
        let mut last = f64::INFINITY;
        for _ in 0..SWEEP_MAX {
            let mid = y_minus.lerp(&y_plus, 0.5);
            let b = adv(&mid).map_err(|e| e.to_string())?;
            let mut next = rhs.clone();
            next.axpy(-self.dt, &b);
            let next = Self::mul(&self.implicit_inv, &next);
            let diff = next.sub(&y_plus).norm();
            let scale = next.norm();
            y_plus = next;
            if !diff.is_finite() {
                return Err("non-finite midpoint sweep".into());
            }
            if diff <= SWEEP_TOL * scale || (diff >= last && diff <= 1e-13 * scale) {
                return Ok(y_plus);
            }
            last = diff;
        }
        Err(format!(
            "midpoint sweeps did not converge (last update {last:e})"
        ))
    }

    /// Transpose of the linear step for drift `B`: returns
    /// `(I - dt/2 Lᵀ)(I + dt/2 Lᵀ)⁻¹ p` with `Lᵀ = A - B`.
    fn adjoint(
        &self,
        p: &SpectralField,
        adv: impl Fn(&SpectralField) -> SpectralField,
    ) -> std::result::Result<SpectralField, String> {
        let h = 0.5 * self.dt;
        let base = Self::mul(&self.implicit_inv, p);
        let mut q = base.clone();
        let mut last = f64::INFINITY;
        let mut converged = false;
        for _ in 0..SWEEP_MAX {
            let b = adv(&q);
            let mut next = p.clone();
            next.axpy(h, &b);
            let next = Self::mul(&self.implicit_inv, &next);
            let diff = next.sub(&q).norm();
            let scale = next.norm();
            q = next;
            if !diff.is_finite() {
                return Err("non-finite adjoint sweep".into());
            }
            if diff <= SWEEP_TOL * scale || (diff >= last && diff <= 1e-13 * scale) {
                converged = true;
                break;
            }
            last = diff;
        }
        if !converged {
            return Err(format!(
                "adjoint sweeps did not converge (last update {last:e})"
            ));
        }
        let mut out = Self::mul(&self.explicit, &q);
        out.axpy(h, &adv(&q));
        Ok(out)
    }
}

fn step_limit(sup: f64) -> f64 {
    0.5 / sup.max(1.0)
}

fn check_forcing(forcing: Option<&[SpectralField]>, g: TimeGrid, basis: &Arc<Basis>) -> Result<()> {
    if let Some(f) = forcing {
        if f.len() != g.len() {
            return Err(Error::Length {
                expected: g.len(),
                got: f.len(),
            });
        }
        if f.iter().any(|x| !same_basis(x.basis(), basis)) {
            return Err(Error::BasisMismatch);
        }
    }
    Ok(())
}

fn guard(step: usize, g: TimeGrid, y: &SpectralField, y0_norm: f64) -> Result<()> {
    if !y.is_finite() {
        return Err(Error::BlowUp {
            step,
            time: g.time(step),
            reason: "non-finite state".into(),
        });
    }
    if y0_norm > 0.0 && y.norm() > BLOW_UP_FACTOR * y0_norm {
        return Err(Error::BlowUp {
            step,
            time: g.time(step),
            reason: format!("‖y‖ = {:e} exceeds {BLOW_UP_FACTOR:e}·‖y0‖", y.norm()),
        });
    }
    Ok(())
}

fn kick(y: &mut SpectralField, forcing: Option<&[SpectralField]>, n: usize, half_dt: f64) {
    if let Some(f) = forcing {
        y.axpy(half_dt, &f[n]);
    }
}

/// Nonlinear Leray-α run with spectral forcing `f_n` (or none).
pub fn simulate_leray_forced(
    y0: &SpectralField,
    forcing: Option<&[SpectralField]>,
    p: FilterParams,
    g: TimeGrid,
) -> Result<Trajectory> {
    let basis = y0.basis();
    check_forcing(forcing, g, basis)?;
    let dt = g.dt();
    let limit0 = step_limit(to_grid(&apply_filter(y0, p)).sup_norm());
    if dt > limit0 {
        return Err(Error::StepTooLarge {
            dt,
            limit: limit0,
            step: 0,
        });
    }
    let cn = CrankNicolson::new(basis, dt);
    let y0_norm = y0.norm();
    let mut states = Vec::with_capacity(g.len());
    states.push(y0.clone());
    for n in 0..g.steps() {
        let mut y_minus = states[n].clone();
        kick(&mut y_minus, forcing, n, 0.5 * dt);
        let mut sup = 0.0;
        let mut y_next = cn
            .forward(&y_minus, |mid| {
                let zg = to_grid(&apply_filter(mid, p));
                sup = zg.sup_norm();
                Ok(advect_grid(&zg, mid))
            })
            .map_err(|reason| Error::BlowUp {
                step: n + 1,
                time: g.time(n + 1),
                reason,
            })?;
        if dt > step_limit(sup) {
            return Err(Error::StepTooLarge {
                dt,
                limit: step_limit(sup),
                step: n,
            });
        }
        kick(&mut y_next, forcing, n + 1, 0.5 * dt);
        guard(n + 1, g, &y_next, y0_norm)?;
        states.push(y_next);
    }
    Trajectory::new(g, states)
}

fn check_control(v: &ControlSignal, g: TimeGrid, basis: &Basis) -> Result<()> {
    if v.grid() != g {
        return Err(config_err(
            "time",
            "control and simulation time grids differ",
        ));
    }
    if v.mask().n() != basis.grid_size() {
        return Err(Error::Length {
            expected: basis.grid_size(),
            got: v.mask().n(),
        });
    }
    Ok(())
}

/// Nonlinear Leray-α run driven by the distributed control `v 1_ω`.
pub fn simulate_leray(
    y0: &SpectralField,
    v: &ControlSignal,
    p: FilterParams,
    g: TimeGrid,
) -> Result<Trajectory> {
    check_control(v, g, y0.basis())?;
    let forcing = (!v.is_zero()).then(|| v.forcing(y0.basis()));
    simulate_leray_forced(y0, forcing.as_deref(), p, g)
}

/// Linear Oseen run with prescribed drift and spectral forcing.
pub fn simulate_oseen_forced(
    y0: &SpectralField,
    h: &OseenDrift,
    forcing: Option<&[SpectralField]>,
    g: TimeGrid,
) -> Result<Trajectory> {
    let basis = y0.basis();
    check_forcing(forcing, g, basis)?;
    if h.grid() != g {
        return Err(config_err("time", "drift and simulation time grids differ"));
    }
    if !same_basis(h.basis(), basis) {
        return Err(Error::BasisMismatch);
    }
    let dt = g.dt();
    let cn = CrankNicolson::new(basis, dt);
    let y0_norm = y0.norm();
    let mut states = Vec::with_capacity(g.len());
    states.push(y0.clone());
    for n in 0..g.steps() {
        let hg = to_grid(&h.midpoint(n));
        let limit = step_limit(hg.sup_norm());
        if dt > limit {
            return Err(Error::StepTooLarge { dt, limit, step: n });
        }
        let mut y_minus = states[n].clone();
        kick(&mut y_minus, forcing, n, 0.5 * dt);
        let mut y_next = cn
            .forward(&y_minus, |mid| Ok(advect_grid(&hg, mid)))
            .map_err(|reason| Error::BlowUp {
                step: n + 1,
                time: g.time(n + 1),
                reason,
            })?;
        kick(&mut y_next, forcing, n + 1, 0.5 * dt);
        guard(n + 1, g, &y_next, y0_norm)?;
        states.push(y_next);
    }
    Trajectory::new(g, states)
}

pub fn simulate_oseen(
    y0: &SpectralField,
    h: &OseenDrift,
    v: &ControlSignal,
    g: TimeGrid,
) -> Result<Trajectory> {
    check_control(v, g, y0.basis())?;
    let forcing = (!v.is_zero()).then(|| v.forcing(y0.basis()));
    simulate_oseen_forced(y0, h, forcing.as_deref(), g)
}

/// Backward sweep of the discrete adjoint of [`simulate_oseen`] from `φ_T`.
pub fn simulate_adjoint(phi_t: &SpectralField, h: &OseenDrift, g: TimeGrid) -> Result<Trajectory> {
    let basis = phi_t.basis();
    if h.grid() != g {
        return Err(config_err("time", "drift and simulation time grids differ"));
    }
    if !same_basis(h.basis(), basis) {
        return Err(Error::BasisMismatch);
    }
    let dt = g.dt();
    let cn = CrankNicolson::new(basis, dt);
    let norm_t = phi_t.norm();
    let mut states = vec![SpectralField::zeros(basis); g.len()];
    states[g.steps()] = phi_t.clone();
    for n in (0..g.steps()).rev() {
        let hg = to_grid(&h.midpoint(n));
        let limit = step_limit(hg.sup_norm());
        if dt > limit {
            return Err(Error::StepTooLarge { dt, limit, step: n });
        }
        let prev = cn
            .adjoint(&states[n + 1], |q| advect_grid(&hg, q))
            .map_err(|reason| Error::BlowUp {
                step: n,
                time: g.time(n),
                reason,
            })?;
        guard(n, g, &prev, norm_t)?;
        states[n] = prev;
    }
    Trajectory::new(g, states)
}

/// Exponential-trapezoid discretization of the variation-of-constants
/// formula, with Picard iteration inside each step:
///
/// ```text
/// y_{n+1} = e^{-dt A} y_n + dt/2 [e^{-dt A} F_n + F_{n+1}],
/// F_n = -P((h_n·∇) y_n) + P(v_n 1_ω)
/// ```
pub fn duhamel_reconstruct(
    y0: &SpectralField,
    h: &OseenDrift,
    v: &ControlSignal,
    g: TimeGrid,
) -> Result<Trajectory> {
    let basis = y0.basis();
    check_control(v, g, basis)?;
    if h.grid() != g {
        return Err(config_err("time", "drift and simulation time grids differ"));
    }
    let dt = g.dt();
    let decay: Vec<f64> = basis
        .eigenvalues()
        .iter()
        .map(|l| (-dt * l).exp())
        .collect();
    let semigroup = |u: &SpectralField| CrankNicolson::mul(&decay, u);
    let forcing = v.forcing(basis);
    let drift_grids: Vec<GridField> = h.fields().iter().map(to_grid).collect();
    let rhs = |n: usize, y: &SpectralField| {
        let mut f = forcing[n].clone();
        f.axpy(-1.0, &advect_grid(&drift_grids[n], y));
        f
    };
    let y0_norm = y0.norm();
    let mut states = Vec::with_capacity(g.len());
    states.push(y0.clone());
    for n in 0..g.steps() {
        let yn = &states[n];
        let mut known = semigroup(yn);
        known.axpy(0.5 * dt, &semigroup(&rhs(n, yn)));
        let mut y = known.clone();
        y.axpy(0.5 * dt, &rhs(n, yn));
        let mut converged = false;
        for _ in 0..SWEEP_MAX {
            let mut next = known.clone();
            next.axpy(0.5 * dt, &rhs(n + 1, &y));
            let diff = next.sub(&y).norm();
            let scale = next.norm();
            y = next;
            if !diff.is_finite() {
                break;
            }
            if diff <= 1e-14 * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence(format!(
                "Picard iteration at step {n} did not converge in {SWEEP_MAX} sweeps; reduce dt or the drift"
            )));
        }
        guard(n + 1, g, &y, y0_norm)?;
        states.push(y);
    }
    Trajectory::new(g, states)
}

/// Discrete energy balance of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `r_n = [‖y_{n+1}‖² - ‖y_n‖²]/(2dt) + ‖∇y_{n+½}‖² - (f_{n+½}, y_{n+½})`
    pub balance_residual: Vec<f64>,
    /// `Σ dt ‖∇y_{n+½}‖²`
    pub cumulative_dissipation: f64,
    pub sup_l2: f64,
    pub sup_v: f64,
    pub sup_filtered_l2: f64,
    /// `‖y_0‖ + ‖v 1_ω‖_{L²(Q)}`
    pub b0: f64,
    /// `(Σ dt ‖(y_{n+1} - y_n)/dt‖²_{V'})^{1/2}`
    pub time_derivative_l2_vdual: f64,
}

impl EnergyReport {
    pub fn max_abs_residual(&self) -> f64 {
        self.balance_residual
            .iter()
            .map(|r| r.abs())
            .fold(0.0, f64::max)
    }
}

pub fn energy_report(tr: &Trajectory, v: Option<&ControlSignal>, p: FilterParams) -> EnergyReport {
    let g = tr.grid();
    let dt = g.dt();
    let basis = tr.basis();
    let forcing = v.filter(|v| !v.is_zero()).map(|v| v.forcing(basis));
    let mut residual = Vec::with_capacity(g.steps());
    let mut dissipation = 0.0;
    let mut dtdual = 0.0;
    for n in 0..g.steps() {
        let (a, b) = (tr.state(n), tr.state(n + 1));
        let mid = a.lerp(b, 0.5);
        let grad2 = sobolev_norm(&mid, 1.0).powi(2);
        let work = forcing
            .as_ref()
            .map(|f| f[n].lerp(&f[n + 1], 0.5).dot(&mid))
            .unwrap_or(0.0);
        residual.push((b.norm().powi(2) - a.norm().powi(2)) / (2.0 * dt) + grad2 - work);
        dissipation += dt * grad2;
        dtdual += dt * sobolev_norm(&b.sub(a).scaled(1.0 / dt), -1.0).powi(2);
    }
    let f_l2q = forcing
        .as_ref()
        .map(|f| {
            f.iter()
                .enumerate()
                .map(|(n, x)| dt * g.weight(n) * x.norm().powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .unwrap_or(0.0);
    EnergyReport {
        balance_residual: residual,
        cumulative_dissipation: dissipation,
        sup_l2: tr.sup_of(|y| y.norm()),
        sup_v: tr.sup_of(|y| sobolev_norm(y, 1.0)),
        sup_filtered_l2: tr.sup_of(|y| apply_filter(y, p).norm()),
        b0: tr.initial().norm() + f_l2q,
        time_derivative_l2_vdual: dtdual.sqrt(),
    }
}

/// Measure of the set of times where the enstrophy is controlled by the
/// initial energy, and the first time the `D(A)` norm falls below `φ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularizationReport {
    pub measure: f64,
    /// `τ/k - dt`
    pub lower_bound: f64,
    pub first_time: Option<f64>,
    /// `φ(‖y_0‖) = 65 (1 + C₀) (k/τ)³ ‖y_0‖⁶`
    pub phi: f64,
}

/// Default `C₀` in `φ`; the constant is not determined analytically.
pub const DEFAULT_C0: f64 = 1.0;

pub fn regularization_times(
    tr: &Trajectory,
    k: f64,
    tau: f64,
    c0: f64,
) -> Result<RegularizationReport> {
    let g = tr.grid();
    if !(k > 1.5 && k.is_finite()) {
        return Err(config_err(
            "regularization.k",
            format!("k = {k} must exceed 3/2"),
        ));
    }
    if !(tau > 0.0 && tau <= 0.5 * g.t_final() * (1.0 + 1e-12)) {
        return Err(config_err(
            "regularization.tau",
            format!("tau = {tau} must lie in (0, T/2]"),
        ));
    }
    let dt = g.dt();
    let s = tr.initial().norm();
    let level = k / tau * s * s;
    let count = (0..g.len())
        .take_while(|&n| g.time(n) < tau * (1.0 - 1e-12))
        .filter(|&n| sobolev_norm(tr.state(n), 1.0).powi(2) <= level)
        .count();
    let measure = count as f64 * dt;
    let phi = 65.0 * (1.0 + c0) * (k / tau).powi(3) * s.powi(6);
    let first_time = (0..g.len())
        .find(|&n| sobolev_norm(tr.state(n), 2.0).powi(2) <= phi)
        .map(|n| g.time(n));
    let lower_bound = tau / k - dt;
    if measure < lower_bound {
        return Err(Error::Property(format!(
            "regularization-time measure {measure} below tau/k - dt = {lower_bound}"
        )));
    }
    Ok(RegularizationReport {
        measure,
        lower_bound,
        first_time,
        phi,
    })
}

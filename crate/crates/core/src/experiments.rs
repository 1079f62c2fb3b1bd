//! α-sweeps, the uniformity check, the penalization study, smallness
//! calibration and the small testbeds they run on.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{hum_solve, HumConfig};
use crate::dynamics::{ControlMask, OseenDrift, TimeGrid, Trajectory};
use crate::error::{config_err, Error, Result};
use crate::filter::{apply_filter, FilterParams};
use crate::nonlinear::{fixed_point_control, verify_null, FixedPointConfig};
use crate::spectral::{build_basis, sobolev_norm, Basis, SpectralField, WaveVector};

/// Basis, control region and time grid shared by a family of runs.
#[derive(Clone, Debug)]
pub struct Testbed {
    pub basis: Arc<Basis>,
    pub mask: ControlMask,
    pub grid: TimeGrid,
}

impl Testbed {
    /// Control region `[0, π] × [0, π]` with a sharp edge.
    pub fn new(basis: Arc<Basis>, grid: TimeGrid) -> Result<Self> {
        let mask = ControlMask::rectangle(
            basis.grid_size(),
            [0.0, std::f64::consts::PI, 0.0, std::f64::consts::PI],
            0.0,
        )?;
        Ok(Self { basis, mask, grid })
    }

    /// The 8-mode testbed: `N = 8`, `k_max = 1`, `T = 1`, `M = 200`.
    pub fn m8() -> Self {
        Self::new(
            build_basis(8, 1).expect("valid"),
            TimeGrid::new(1.0, 200).expect("valid"),
        )
        .expect("valid")
    }

    /// Modes `(±1, 0), (0, ±1)` on `N = 8`.
    pub fn m4() -> Self {
        let modes = [
            WaveVector::new(1, 0),
            WaveVector::new(-1, 0),
            WaveVector::new(0, 1),
            WaveVector::new(0, -1),
        ];
        Self::new(
            Basis::from_modes(8, &modes).expect("valid"),
            TimeGrid::new(1.0, 200).expect("valid"),
        )
        .expect("valid")
    }

    /// Unit-norm field on modes `(1, 0)` and `(1, 1)`, which interact.
    pub fn two_mode(&self) -> Result<SpectralField> {
        let a = SpectralField::single_mode(&self.basis, WaveVector::new(1, 0), 1.0)?;
        let b = SpectralField::single_mode(&self.basis, WaveVector::new(1, 1), 1.0)?;
        Ok(a.add(&b).scaled(std::f64::consts::FRAC_1_SQRT_2))
    }

    /// Random unit-norm direction.
    pub fn direction(&self, rng: &mut ChaCha8Rng) -> SpectralField {
        loop {
            let u = SpectralField::random(&self.basis, rng, 0.0);
            let n = u.norm();
            if n > 1e-3 {
                return u.scaled(1.0 / n);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub control_linf_l2: f64,
    /// `‖y(T)‖` of the nonlinear re-simulation.
    pub terminal_norm: f64,
    pub iters: usize,
    pub converged: bool,
    /// `‖y_α - y_0‖_{L²(Q)}`
    pub l2q_dist_y: f64,
    /// `‖z_α - y_0‖_{L²(Q)}`
    pub l2q_dist_z: f64,
    /// `‖z_α - y_α‖_{L²(Q)}`
    pub l2q_filter_gap: f64,
    /// `α² sup_t ‖y_α‖_V √T √λ_max`
    pub filter_gap_bound: f64,
    pub sigma_ball_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    /// Sorted by decreasing α; the last row is the `α = 0` limit run.
    pub rows: Vec<SweepRow>,
    pub epsilon: f64,
}

impl SweepReport {
    pub fn alphas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.alpha).collect()
    }

    pub fn limit(&self) -> &SweepRow {
        self.rows.last().expect("sweep has the α = 0 row")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "alpha,control_linf_l2,terminal_norm,iters,converged,l2Q_dist_y,l2Q_dist_z\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{},{},{:.16e},{:.16e}",
                r.alpha,
                r.control_linf_l2,
                r.terminal_norm,
                r.iters,
                r.converged,
                r.l2q_dist_y,
                r.l2q_dist_z
            );
        }
        s
    }
}

struct Member {
    alpha: f64,
    converged: bool,
    iters: usize,
    control: f64,
    terminal: f64,
    sigma_ball_max: f64,
    y: Option<Trajectory>,
}

/// Runs [`fixed_point_control`] for each α (in parallel) from the same `y0`.
pub fn alpha_sweep(
    y0: &SpectralField,
    bed: &Testbed,
    cfg: &FixedPointConfig,
    alphas: &[f64],
) -> Result<SweepReport> {
    if !alphas.contains(&0.0) {
        return Err(config_err("sweep.alphas", "the α list must contain 0"));
    }
    let mut sorted = alphas.to_vec();
    for &a in &sorted {
        FilterParams::new(a).map_err(|_| config_err("sweep.alphas", format!("invalid α {a}")))?;
    }
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(config_err("sweep.alphas", "α values must be distinct"));
    }
    cfg.validate()?;
    let g = bed.grid;
    let members: Vec<Member> = sorted
        .par_iter()
        .map(|&alpha| -> Result<Member> {
            let p = FilterParams { alpha };
            let r = fixed_point_control(y0, p, cfg, &bed.mask, g)?;
            let check = verify_null(y0, &r.v, p, g);
            let (terminal, y) = match check {
                Ok(c) => (c.terminal_norm, Some(c.trajectory)),
                Err(Error::BlowUp { .. }) => (f64::INFINITY, None),
                Err(e) => return Err(e),
            };
            Ok(Member {
                alpha,
                converged: r.converged && y.is_some(),
                iters: r.iters,
                control: r.v.linf_l2(),
                terminal,
                sigma_ball_max: r.sigma_ball_max,
                y,
            })
        })
        .collect::<Result<_>>()?;

    let limit = members.last().expect("α = 0 present");
    let y_limit = limit.y.as_ref().filter(|_| limit.converged);
    let c_basis = y0.basis().max_eigenvalue().sqrt();
    let rows = members
        .iter()
        .map(|m| {
            let (dy, dz, gap, bound) = match (&m.y, y_limit) {
                (Some(y), Some(y_lim)) if m.converged => {
                    let p = FilterParams { alpha: m.alpha };
                    let z = y.map(|s| apply_filter(s, p));
                    let sup_v = y.sup_of(|s| sobolev_norm(s, 1.0));
                    (
                        y.l2q_distance(y_lim),
                        z.l2q_distance(y_lim),
                        z.l2q_distance(y),
                        m.alpha * m.alpha * sup_v * g.t_final().sqrt() * c_basis,
                    )
                }
                _ => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            };
            SweepRow {
                alpha: m.alpha,
                control_linf_l2: m.control,
                terminal_norm: m.terminal,
                iters: m.iters,
                converged: m.converged,
                l2q_dist_y: dy,
                l2q_dist_z: dz,
                l2q_filter_gap: gap,
                filter_gap_bound: bound,
                sigma_ball_max: m.sigma_ball_max,
            }
        })
        .collect();
    Ok(SweepReport {
        rows,
        epsilon: cfg.hum.epsilon,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Uniformity {
    pub max_over_min: f64,
    pub pass: bool,
}

/// `max / min` of the control norms over converged rows; `≤ 1.5` passes.
pub fn uniformity_check(report: &SweepReport) -> Result<Uniformity> {
    let norms: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.control_linf_l2)
        .collect();
    if norms.len() < 2 {
        return Err(Error::Property(format!(
            "uniformity needs 2 converged rows, found {}",
            norms.len()
        )));
    }
    let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let max_over_min = if max == 0.0 { 1.0 } else { max / min };
    Ok(Uniformity {
        max_over_min,
        pass: max_over_min <= 1.5,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PenaltyRow {
    pub epsilon: f64,
    pub terminal_sq: f64,
    pub cg_iters: usize,
    pub converged: bool,
}

/// `‖y(T)‖²` of the penalized control at each ε, for fixed `y0` and drift.
pub fn penalization_study(
    y0: &SpectralField,
    h: &OseenDrift,
    base: &HumConfig,
    mask: &ControlMask,
    g: TimeGrid,
    epsilons: &[f64],
) -> Result<Vec<PenaltyRow>> {
    epsilons
        .iter()
        .map(|&epsilon| {
            let cfg = HumConfig { epsilon, ..*base };
            let r = hum_solve(y0, h, &cfg, mask, g)?;
            Ok(PenaltyRow {
                epsilon,
                terminal_sq: r.terminal_norm * r.terminal_norm,
                cg_iters: r.cg_iters,
                converged: r.converged,
            })
        })
        .collect()
}

/// `‖y(T)‖²` ratio between consecutive rows, normalized per halving of ε.
pub fn halving_factors(rows: &[PenaltyRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| {
            let halvings = (w[0].epsilon / w[1].epsilon).log2();
            (w[0].terminal_sq / w[1].terminal_sq).powf(1.0 / halvings)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub threshold: f64,
    /// `(amplitude, directions converged)` per bisection probe.
    pub probes: Vec<(f64, usize)>,
}

/// Largest `‖y0‖` in `[lo, hi]` for which the fixed-point loop converges
/// along all `directions` random unit directions, by bisection.
pub fn calibrate_smallness(
    bed: &Testbed,
    p: FilterParams,
    cfg: &FixedPointConfig,
    directions: usize,
    seed: u64,
    mut lo: f64,
    mut hi: f64,
    bisections: usize,
) -> Result<Calibration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<SpectralField> = (0..directions).map(|_| bed.direction(&mut rng)).collect();
    let count = |amp: f64| -> Result<usize> {
        let ok: Vec<bool> = dirs
            .par_iter()
            .map(|d| {
                fixed_point_control(&d.scaled(amp), p, cfg, &bed.mask, bed.grid)
                    .map(|r| r.converged)
            })
            .collect::<Result<_>>()?;
        Ok(ok.into_iter().filter(|&b| b).count())
    };
    let mut probes = Vec::new();
    for _ in 0..bisections {
        let mid = 0.5 * (lo + hi);
        let c = count(mid)?;
        probes.push((mid, c));
        if c == directions {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration {
        threshold: lo,
        probes,
    })
}

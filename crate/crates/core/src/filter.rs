//! Helmholtz smoothing `z = (I + α² A)⁻¹ y` that closes the Leray-α system.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::spectral::{sobolev_norm, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub alpha: f64,
}

impl FilterParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(config_err(
                "physics.alpha",
                format!("alpha = {alpha} must be finite and >= 0"),
            ));
        }
        Ok(Self { alpha })
    }

    /// Per-mode transfer factor `1 / (1 + α² λ)`.
    pub fn transfer(&self, lambda: f64) -> f64 {
        1.0 / (1.0 + self.alpha * self.alpha * lambda)
    }
}

/// Per-mode division `ŷ_k / (1 + α² λ_k)`; `α = 0` returns `y` unchanged.
pub fn apply_filter(y: &SpectralField, p: FilterParams) -> SpectralField {
    if p.alpha == 0.0 {
        return y.clone();
    }
    let a2 = p.alpha * p.alpha;
    y.map_eigen(|lam| 1.0 / (1.0 + a2 * lam))
}

/// The comparison estimates between `z = filter(y)` and `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FilterBoundsReport {
    /// `(‖z‖, ‖y‖)`
    pub norm_l2: (f64, f64),
    /// `(‖z‖_V, ‖y‖_V)`
    pub norm_v: (f64, f64),
    /// `(‖z‖² + 2α²‖z‖_V², ‖y‖²)`
    pub weighted: (f64, f64),
}

impl FilterBoundsReport {
    /// Smallest slack `rhs - lhs` over the three inequalities.
    pub fn min_slack(&self) -> f64 {
        [self.norm_l2, self.norm_v, self.weighted]
            .iter()
            .map(|(l, r)| r - l)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn holds(&self) -> bool {
        self.min_slack() >= -1e-12
    }
}

pub fn filter_bounds_report(y: &SpectralField, p: FilterParams) -> FilterBoundsReport {
    let z = apply_filter(y, p);
    let (zl2, yl2) = (z.norm(), y.norm());
    let zv = sobolev_norm(&z, 1.0);
    FilterBoundsReport {
        norm_l2: (zl2, yl2),
        norm_v: (zv, sobolev_norm(y, 1.0)),
        weighted: (zl2 * zl2 + 2.0 * p.alpha * p.alpha * zv * zv, yl2 * yl2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{apply_semigroup, apply_stokes_power, build_basis, WaveVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn examples() {
        let b = build_basis(16, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = SpectralField::random(&b, &mut rng, 0.0);
        assert_eq!(apply_filter(&y, FilterParams::new(0.0).unwrap()), y);

        let m = SpectralField::single_mode(&b, WaveVector::new(1, 0), 1.0).unwrap();
        assert_eq!(
            apply_filter(&m, FilterParams::new(1.0).unwrap()).norm(),
            0.5
        );
        let m2 = SpectralField::single_mode(&b, WaveVector::new(2, 0), 1.0).unwrap();
        assert_eq!(
            apply_filter(&m2, FilterParams::new(0.5).unwrap()).norm(),
            0.5
        );
        assert!(FilterParams::new(-1.0).is_err());
        assert!(FilterParams::new(f64::NAN).is_err());
    }

    #[test]
    fn report_examples() {
        let b = build_basis(16, 5).unwrap();
        let p = FilterParams::new(1.0).unwrap();
        let r0 = filter_bounds_report(&SpectralField::zeros(&b), p);
        assert_eq!(r0.min_slack(), 0.0);
        let m = SpectralField::single_mode(&b, WaveVector::new(1, 0), 1.0).unwrap();
        let r = filter_bounds_report(&m, p);
        assert_eq!(r.weighted, (0.75, 1.0));
        assert!(r.holds());
    }

    #[test]
    fn weighted_bound_per_mode() {
        // brute force: (1+a²λ)^-2 (1+2a²λ) ≤ 1 for every retained λ
        let b = build_basis(32, 10).unwrap();
        for alpha in [0.1, 1.0] {
            let a2: f64 = alpha * alpha;
            for &lam in b.eigenvalues() {
                assert!((1.0 + 2.0 * a2 * lam) / (1.0 + a2 * lam).powi(2) <= 1.0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..20 {
                let y = SpectralField::random(&b, &mut rng, 0.5);
                assert!(filter_bounds_report(&y, FilterParams { alpha }).holds());
            }
        }
    }

    #[test]
    fn commutes_with_diagonal_operators() {
        let b = build_basis(16, 5).unwrap();
        let p = FilterParams::new(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = SpectralField::random(&b, &mut rng, 0.0);
        let a = apply_filter(&apply_semigroup(&y, 0.2), p);
        let c = apply_semigroup(&apply_filter(&y, p), 0.2);
        assert!(a.sub(&c).norm() <= 1e-14 * y.norm());
        let a = apply_filter(&apply_stokes_power(&y, 0.7), p);
        let c = apply_stokes_power(&apply_filter(&y, p), 0.7);
        assert!(a.sub(&c).norm() <= 1e-14 * sobolev_norm(&y, 1.4));
    }

    #[test]
    fn per_mode_contraction_and_consistency() {
        let b = build_basis(16, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = SpectralField::random(&b, &mut rng, 0.0);
        for alpha in [0.01, 0.1, 1.0] {
            let p = FilterParams::new(alpha).unwrap();
            let z = apply_filter(&y, p);
            for (zk, yk) in z.coeffs().iter().zip(y.coeffs()) {
                assert!(zk.abs() <= yk.abs());
            }
            let c = b.max_eigenvalue().sqrt();
            assert!(z.sub(&y).norm() <= alpha * alpha * sobolev_norm(&y, 1.0) * c);
        }
    }
}

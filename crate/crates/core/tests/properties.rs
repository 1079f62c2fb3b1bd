use lal_core::dynamics::{advect, energy_report, simulate_leray_forced, TimeGrid};
use lal_core::filter::{apply_filter, filter_bounds_report, FilterParams};
use lal_core::io::RunConfig;
use lal_core::spectral::{
    apply_semigroup, apply_stokes_power, build_basis, sobolev_norm, to_grid, to_spectral,
    SpectralField,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn field(seed: u64, n: usize, k: usize) -> SpectralField {
    let b = build_basis(n, k).unwrap();
    SpectralField::random(&b, &mut ChaCha8Rng::seed_from_u64(seed), 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_round_trip_and_parseval(seed in any::<u64>(), big in any::<bool>()) {
        let (n, k) = if big { (32, 10) } else { (16, 5) };
        let u = field(seed, n, k);
        let g = to_grid(&u);
        let back = to_spectral(&g, u.basis()).unwrap();
        prop_assert!(back.sub(&u).norm() <= 1e-13 * u.norm());
        prop_assert!((g.l2_norm() - u.norm()).abs() <= 1e-13 * u.norm());
    }

    #[test]
    fn filter_contracts_and_is_monotone(seed in any::<u64>(), a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let y = field(seed, 16, 5);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let r = filter_bounds_report(&y, FilterParams { alpha: lo });
        prop_assert!(r.holds(), "{:?}", r);
        let z_lo = apply_filter(&y, FilterParams { alpha: lo });
        let z_hi = apply_filter(&y, FilterParams { alpha: hi });
        prop_assert!(z_hi.norm() <= z_lo.norm() * (1.0 + 1e-15));
        // filter commutes with the Stokes operator
        let p = FilterParams { alpha: lo };
        let d = apply_filter(&apply_stokes_power(&y, 1.0), p).sub(&apply_stokes_power(&apply_filter(&y, p), 1.0));
        prop_assert!(d.norm() <= 1e-12 * apply_stokes_power(&y, 1.0).norm());
    }

    #[test]
    fn zero_alpha_filter_is_the_identity(seed in any::<u64>()) {
        let y = field(seed, 16, 5);
        let z = apply_filter(&y, FilterParams { alpha: 0.0 });
        prop_assert_eq!(z.coeffs(), y.coeffs());
    }

    #[test]
    fn advection_is_skew(seed in any::<u64>()) {
        let b = build_basis(16, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = SpectralField::random(&b, &mut rng, 0.0);
        let y = SpectralField::random(&b, &mut rng, 0.0);
        let w = SpectralField::random(&b, &mut rng, 0.0);
        let scale = advect(&z, &y).norm() * y.norm() + 1.0;
        prop_assert!(advect(&z, &y).dot(&y).abs() <= 1e-13 * scale);
        // antisymmetry in the last two slots, up to the dealiasing truncation
        let s = advect(&z, &y).dot(&w) + advect(&z, &w).dot(&y);
        prop_assert!(s.abs() <= 1e-12 * scale);
    }

    #[test]
    fn semigroup_smoothing_and_composition(seed in any::<u64>(), s in 0.01f64..2.0, t in 0.01f64..2.0, r in 0.0f64..2.0) {
        let u = field(seed, 16, 5);
        let e = apply_semigroup(&u, t);
        let smoothed = apply_stokes_power(&e, r).norm();
        let bound = if r == 0.0 { 1.0 } else { (r / (std::f64::consts::E * t)).powf(r) };
        prop_assert!(smoothed <= bound * u.norm() * (1.0 + 1e-12));
        let both = apply_semigroup(&apply_semigroup(&u, s), t);
        prop_assert!(both.sub(&apply_semigroup(&u, s + t)).norm() <= 1e-14 * u.norm());
        prop_assert!((sobolev_norm(&u, 0.0) - u.norm()).abs() <= 1e-15 * u.norm());
        prop_assert!((sobolev_norm(&u, 1.0) - apply_stokes_power(&u, 0.5).norm()).abs() <= 1e-12 * sobolev_norm(&u, 1.0));
    }

    #[test]
    fn config_json_round_trip(n in prop::sample::select(vec![8usize, 16, 32]), alpha in 0.0f64..2.0, steps in 2usize..500, eps in 1e-8f64..1.0) {
        let mut cfg = RunConfig::default();
        cfg.grid.n = n;
        cfg.grid.k_max = n / 3;
        cfg.physics.alpha = alpha;
        cfg.time.steps = steps;
        cfg.control.epsilon = eps;
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn leray_energy_identity(seed in any::<u64>(), alpha in 0.0f64..1.0, amp in 0.01f64..2.0) {
        let y0 = field(seed, 16, 5).scaled(amp);
        let p = FilterParams { alpha };
        let tr = simulate_leray_forced(&y0, None, p, TimeGrid::new(0.5, 100).unwrap()).unwrap();
        let report = energy_report(&tr, None, p);
        prop_assert!(report.max_abs_residual() <= 1e-10 * y0.norm().powi(2).max(1.0));
        prop_assert!(tr.terminal().norm() <= y0.norm());
    }
}

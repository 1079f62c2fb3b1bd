//! Production integrators and solvers against independent dense references.

use lal_core::control::{
    control_bound_report, gramian_control, hum_solve, Gramian, HumConfig, WeightSpec,
};
use lal_core::dynamics::{
    advect, duhamel_reconstruct, simulate_adjoint, simulate_leray_forced, simulate_oseen,
    simulate_oseen_forced, ControlMask, ControlSignal, OseenDrift, TimeGrid, Trajectory,
};
use lal_core::experiments::Testbed;
use lal_core::filter::FilterParams;
use lal_core::oracle::{dense, leray_rhs, rk4, InteractionTensor};
use lal_core::spectral::{build_basis, to_grid, Basis, GridField, SpectralField, WaveVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mode(b: &std::sync::Arc<Basis>, k1: i32, k2: i32, a: f64) -> SpectralField {
    SpectralField::single_mode(b, WaveVector::new(k1, k2), a).unwrap()
}

#[test]
fn triad_from_two_single_modes() {
    // z = (0, √2 cos x1), y = (-√2 cos x2, 0): (z·∇)y = (sin(x1+x2) - sin(x1-x2), 0),
    // whose projections on the sine modes of (1,1) and (-1,1) are -1/2 each.
    let b = build_basis(8, 1).unwrap();
    let out = advect(&mode(&b, 1, 0, 1.0), &mode(&b, 0, 1, 1.0));
    for (j, &k) in b.modes().iter().enumerate() {
        let expected = if k == WaveVector::new(-1, -1) || k == WaveVector::new(1, -1) {
            -0.5
        } else {
            0.0
        };
        assert!(
            (out.coeffs()[j] - expected).abs() < 1e-14,
            "{k}: {}",
            out.coeffs()[j]
        );
    }
    let same = advect(&mode(&b, 1, 1, 0.7), &mode(&b, 1, 1, 0.7));
    assert!(same.norm() < 1e-15);
}

#[test]
fn tensor_matches_advect_on_larger_basis() {
    let b = build_basis(16, 2).unwrap();
    let t = InteractionTensor::assemble(&b, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let z = SpectralField::random(&b, &mut rng, 0.0);
        let y = SpectralField::random(&b, &mut rng, 0.0);
        let d = t.apply(z.coeffs(), y.coeffs());
        let f = advect(&z, &y);
        let err: f64 = d
            .iter()
            .zip(f.coeffs())
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-13, "{err}");
    }
}

#[test]
fn leray_two_mode_matches_dense_rk4() {
    let bed = Testbed::m8();
    let y0 = bed.two_mode().unwrap();
    let p = FilterParams::new(0.1).unwrap();
    let g = TimeGrid::new(1.0, 1000).unwrap();
    let tr = simulate_leray_forced(&y0, None, p, g).unwrap();
    let tensor = InteractionTensor::assemble(&bed.basis, 16);
    let reference = rk4(
        &dense(&y0),
        1.0,
        100_000,
        100,
        leray_rhs(&tensor, &bed.basis, 0.1),
    );
    let mut worst = 0.0f64;
    for (s, r) in tr.states().iter().zip(&reference) {
        let d: f64 = s
            .coeffs()
            .iter()
            .zip(r)
            .map(|(a, c)| (a - c).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(d);
    }
    assert!(worst <= 1e-5, "{worst}");
}

#[test]
fn single_mode_decay_and_second_order() {
    let b = build_basis(16, 5).unwrap();
    let y0 = mode(&b, 1, 0, 1.0);
    for alpha in [0.0, 0.1, 1.0] {
        let tr = simulate_leray_forced(
            &y0,
            None,
            FilterParams { alpha },
            TimeGrid::new(1.0, 1000).unwrap(),
        )
        .unwrap();
        let err = tr.terminal().sub(&y0.scaled((-1.0f64).exp())).norm();
        assert!(err <= 1e-6, "{err}");
    }
    let y0 = mode(&b, 2, 1, 1.0);
    let exact = (-5.0f64).exp();
    let e = |m| {
        let tr = simulate_leray_forced(
            &y0,
            None,
            FilterParams { alpha: 0.1 },
            TimeGrid::new(1.0, m).unwrap(),
        )
        .unwrap();
        tr.terminal().sub(&y0.scaled(exact)).norm()
    };
    let ratio = e(500) / e(1000);
    assert!((3.6..=4.4).contains(&ratio), "{ratio}");
}

#[test]
fn duhamel_closed_form_constant_control() {
    // single mode, h = 0, constant control c w_k: y(T) = e^{-λT} y0 + c (1 - e^{-λT}) / λ
    let b = Basis::from_modes(8, &[WaveVector::new(1, 1), WaveVector::new(-1, -1)]).unwrap();
    let k = WaveVector::new(1, 1);
    let lam = k.eigenvalue();
    let g = TimeGrid::new(1.0, 1000).unwrap();
    let mask = ControlMask::full(8);
    let c = 0.3;
    let field = to_grid(&mode(&b, 1, 1, c));
    let v = ControlSignal::new(g, vec![field; g.len()], &mask).unwrap();
    let h = OseenDrift::zeros(&b, g);
    let y0 = mode(&b, 1, 1, 0.5);
    let expected = 0.5 * (-lam).exp() + c * (1.0 - (-lam).exp()) / lam;
    let j = b.index_of(k).unwrap();
    let duhamel = duhamel_reconstruct(&y0, &h, &v, g).unwrap();
    let cn = simulate_oseen(&y0, &h, &v, g).unwrap();
    assert!((duhamel.terminal().coeffs()[j] - expected).abs() < 1e-6);
    assert!((cn.terminal().coeffs()[j] - expected).abs() < 1e-6);
}

#[test]
fn duhamel_pure_semigroup() {
    let b = build_basis(16, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y0 = SpectralField::random(&b, &mut rng, 0.0);
    let g = TimeGrid::new(0.5, 50).unwrap();
    let mask = ControlMask::full(16);
    let tr = duhamel_reconstruct(
        &y0,
        &OseenDrift::zeros(&b, g),
        &ControlSignal::zeros(g, &mask),
        g,
    )
    .unwrap();
    for n in 0..g.len() {
        let e = lal_core::spectral::apply_semigroup(&y0, g.time(n));
        assert!(tr.state(n).sub(&e).norm() <= 1e-14 * y0.norm());
    }
}

#[test]
fn oseen_superposition() {
    let bed = Testbed::m8();
    let g = bed.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let fields = (0..g.len())
        .map(|_| SpectralField::random(&bed.basis, &mut rng, 0.0).scaled(0.5))
        .collect();
    let h = OseenDrift::new(g, fields).unwrap();
    let y0 = SpectralField::random(&bed.basis, &mut rng, 0.0);
    let forcing: Vec<SpectralField> = (0..g.len())
        .map(|_| SpectralField::random(&bed.basis, &mut rng, 0.0))
        .collect();
    let both = simulate_oseen_forced(&y0, &h, Some(&forcing), g).unwrap();
    let a = simulate_oseen_forced(&y0, &h, None, g).unwrap();
    let c =
        simulate_oseen_forced(&SpectralField::zeros(&bed.basis), &h, Some(&forcing), g).unwrap();
    for n in 0..g.len() {
        assert!(
            both.state(n).sub(&a.state(n).add(c.state(n))).norm()
                <= 1e-12 * both.state(n).norm().max(1.0)
        );
    }
}

/// Columns of the forward and backward two-step maps on the 8-mode basis.
#[test]
fn adjoint_is_the_dense_transpose() {
    let bed = Testbed::m8();
    let g = TimeGrid::new(0.02, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let fields = (0..g.len())
        .map(|_| SpectralField::random(&bed.basis, &mut rng, 0.0))
        .collect();
    let h = OseenDrift::new(g, fields).unwrap();
    let m = bed.basis.len();
    let unit = |j: usize| {
        let mut e = SpectralField::zeros(&bed.basis);
        e.coeffs_mut()[j] = 1.0;
        e
    };
    let fwd: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            simulate_oseen_forced(&unit(j), &h, None, g)
                .unwrap()
                .terminal()
                .coeffs()
                .to_vec()
        })
        .collect();
    let bwd: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            simulate_adjoint(&unit(j), &h, g)
                .unwrap()
                .initial()
                .coeffs()
                .to_vec()
        })
        .collect();
    for i in 0..m {
        for j in 0..m {
            assert!(
                (fwd[j][i] - bwd[i][j]).abs() < 1e-13,
                "({i},{j}) {} vs {}",
                fwd[j][i],
                bwd[i][j]
            );
        }
    }
}

#[test]
fn gramian_diagonal_closed_form() {
    let bed = Testbed::m8();
    let g = TimeGrid::new(1.0, 1000).unwrap();
    let gram = Gramian::assemble(
        &OseenDrift::zeros(&bed.basis, g),
        &ControlMask::full(8),
        WeightSpec::Uniform,
        g,
    )
    .unwrap();
    for (j, &lam) in bed.basis.eigenvalues().iter().enumerate() {
        for i in 0..bed.basis.len() {
            let expected = if i == j {
                (1.0 - (-2.0 * lam).exp()) / (2.0 * lam)
            } else {
                0.0
            };
            assert!((gram.matrix[(i, j)] - expected).abs() < 1e-6, "({i},{j})");
        }
    }
    assert!(gram.asymmetry() <= 1e-15);
}

#[test]
fn scalar_penalized_control_closed_form() {
    // one mode, full mask, h = 0: v(t) = c e^{-λ(T-t)}, y(T) = e^{-λT} y0 / (1 + g/ε)
    let b = Basis::from_modes(8, &[WaveVector::new(1, 0), WaveVector::new(-1, 0)]).unwrap();
    let g = TimeGrid::new(1.0, 2000).unwrap();
    let mask = ControlMask::full(8);
    let h = OseenDrift::zeros(&b, g);
    let y0 = mode(&b, 1, 0, 1.0);
    let eps = 1e-2;
    let gram = (1.0 - (-2.0f64).exp()) / 2.0;
    let terminal = (-1.0f64).exp() / (1.0 + gram / eps);
    let c = -terminal / eps;
    let cfg = HumConfig {
        epsilon: eps,
        cg_tol: 1e-12,
        ..HumConfig::default()
    };
    let r = hum_solve(&y0, &h, &cfg, &mask, g).unwrap();
    assert!(
        (r.terminal_norm - terminal).abs() < 1e-6 * terminal.max(1e-3),
        "{} vs {terminal}",
        r.terminal_norm
    );
    let phase = mode(&b, 1, 0, 1.0);
    for n in [0, 700, 2000] {
        let expected = to_grid(&phase.scaled(c * (-(1.0 - g.time(n))).exp()));
        let got = &r.v.samples()[n];
        let d: f64 = got
            .data()
            .iter()
            .zip(expected.data())
            .map(|(a, e)| (a - e).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-6, "{n}: {d}");
    }
    let bound = control_bound_report(&r.v, &h, &y0).unwrap();
    let by_hand = (r.v.linf_l2() / y0.norm()).ln() / (1.0 + 0.0);
    assert_eq!(bound.fitted_k, by_hand);
}

#[test]
fn hum_matches_gramian_and_cost_is_monotone() {
    for bed in [Testbed::m4(), Testbed::m8()] {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let g = bed.grid;
        let fields = (0..g.len())
            .map(|n| {
                SpectralField::random(&bed.basis, &mut rng, 0.0).scaled(0.3 + 0.001 * n as f64)
            })
            .collect();
        let h = OseenDrift::new(g, fields).unwrap();
        let y0 = bed.direction(&mut rng).scaled(0.2);
        for weights in [
            WeightSpec::Uniform,
            WeightSpec::CarlemanTime { s: 0.05, m: 1 },
        ] {
            let cfg = HumConfig {
                epsilon: 1e-4,
                cg_tol: 1e-13,
                cg_max: 200,
                weights,
            };
            let a = hum_solve(&y0, &h, &cfg, &bed.mask, g).unwrap();
            assert!(a.converged);
            for w in a.cost_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
            }
            let o = gramian_control(&y0, &h, cfg.epsilon, weights, &bed.mask, g).unwrap();
            let num: f64 =
                a.v.samples()
                    .iter()
                    .zip(o.v.samples())
                    .map(|(x, y)| {
                        x.data()
                            .iter()
                            .zip(y.data())
                            .map(|(p, q)| (p - q).powi(2))
                            .sum::<f64>()
                    })
                    .sum();
            let den: f64 =
                o.v.samples()
                    .iter()
                    .map(|x| x.data().iter().map(|p| p * p).sum::<f64>())
                    .sum();
            assert!((num / den).sqrt() <= 1e-6, "{}", (num / den).sqrt());
            assert!((a.terminal_norm - o.terminal_norm).abs() <= 1e-6 * o.terminal_norm);
        }
    }
}

#[test]
fn optimality_system_holds_exactly() {
    let bed = Testbed::m8();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y0 = bed.direction(&mut rng).scaled(0.1);
    let h = OseenDrift::zeros(&bed.basis, bed.grid);
    let weights = WeightSpec::CarlemanTime { s: 0.1, m: 2 };
    let cfg = HumConfig {
        weights,
        ..HumConfig::default()
    };
    let r = hum_solve(&y0, &h, &cfg, &bed.mask, bed.grid).unwrap();
    let profile = lal_core::control::make_weights(weights, bed.grid).unwrap();
    for (n, (v, phi)) in r.v.samples().iter().zip(r.adjoint.states()).enumerate() {
        let mut rebuilt: GridField = to_grid(phi).masked(bed.mask.values());
        rebuilt.scale(-profile.inverse_square(n));
        let d: f64 = v
            .data()
            .iter()
            .zip(rebuilt.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d <= 1e-14, "{n}: {d}");
    }
    // support: vanishes exactly off ω
    for v in r.v.samples() {
        for c in 0..2 {
            for (x, m) in v.component(c).iter().zip(bed.mask.values()) {
                if *m == 0.0 {
                    assert_eq!(*x, 0.0);
                }
            }
        }
    }
}

#[test]
fn larger_region_needs_no_larger_control() {
    let bed = Testbed::m4();
    let g = bed.grid;
    let h = OseenDrift::zeros(&bed.basis, g);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y0 = bed.direction(&mut rng).scaled(0.1);
    let small = ControlMask::rectangle(8, [0.0, 2.0, 0.0, 2.0], 0.0).unwrap();
    let large = ControlMask::rectangle(8, [0.0, 4.0, 0.0, 4.0], 0.0).unwrap();
    let a = gramian_control(&y0, &h, 1e-5, WeightSpec::Uniform, &small, g).unwrap();
    let c = gramian_control(&y0, &h, 1e-5, WeightSpec::Uniform, &large, g).unwrap();
    assert!(
        c.v.linf_l2() <= a.v.linf_l2(),
        "{} > {}",
        c.v.linf_l2(),
        a.v.linf_l2()
    );
}

#[test]
fn gramian_rejects_large_bases() {
    let b = build_basis(16, 5).unwrap();
    let g = TimeGrid::new(1.0, 10).unwrap();
    let e = Gramian::assemble(
        &OseenDrift::zeros(&b, g),
        &ControlMask::full(16),
        WeightSpec::Uniform,
        g,
    );
    assert!(matches!(e, Err(lal_core::Error::BasisTooLarge { .. })));
}

#[test]
fn adjoint_without_drift_is_the_backward_semigroup() {
    let b = build_basis(16, 5).unwrap();
    let g = TimeGrid::new(1.0, 1000).unwrap();
    let phi_t = mode(&b, 2, 1, 1.0);
    let phi = simulate_adjoint(&phi_t, &OseenDrift::zeros(&b, g), g).unwrap();
    let exact: Trajectory = Trajectory::new(
        g,
        (0..g.len())
            .map(|n| phi_t.scaled((-5.0 * (1.0 - g.time(n))).exp()))
            .collect(),
    )
    .unwrap();
    assert!(phi.c0_distance(&exact) < 1e-6);
}

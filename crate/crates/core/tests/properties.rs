use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use optoweak::hilbert::{
    apply_unitary_series, apply_unitary_series_density, build_oscillator, dense_exp_anti_hermitian, kron, max_abs,
    thermal_cutoff, thermal_populations, ComplexMatrix, DensityOperator, Ket, State, SERIES_TOL, THERMAL_TAIL,
};
use optoweak::optomech::{
    amplification_factor, build_tri_mode, period_times, postselection_ket, ExactSimulation, ExperimentConfig,
    MirrorState, PostselectionSpec, StateKind,
};
use optoweak::hilbert::Quadrature;
use optoweak::spectral::{displaced_overlap, displaced_overlap_checked};
use optoweak::weakmeas::{postselection_probability_first_order, weak_values, weak_values_mixed, SystemSpec};

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b)), len)
}

fn normalized(entries: Vec<C64>) -> Ket {
    let v = Ket::from_vec(entries);
    let n = v.norm();
    v / C64::from(n.max(1e-3))
}

/// Anti-Hermitian generator with max entry of order `scale`.
fn anti_hermitian(dim: usize, entries: &[C64], scale: f64) -> ComplexMatrix {
    let m = ComplexMatrix::from_iterator(dim, dim, entries.iter().copied());
    (&m - m.adjoint()) * C64::from(0.5 * scale)
}

fn dim_and_entries(max_dim: usize) -> impl Strategy<Value = (usize, Vec<C64>, Vec<C64>)> {
    (2..=max_dim).prop_flat_map(|d| (Just(d), complex_vec(d * d), complex_vec(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn series_preserves_norm_and_matches_dense((dim, g, v) in dim_and_entries(24), scale in 0.01f64..0.3) {
        let gen = anti_hermitian(dim, &g, scale);
        let v = normalized(v);
        let w = apply_unitary_series(&gen, &v, SERIES_TOL).unwrap();
        prop_assert!((w.norm() - v.norm()).abs() <= 1e-10);
        let u = dense_exp_anti_hermitian(&gen).unwrap();
        let diff = (&u * &v - &w).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-9);
    }

    #[test]
    fn density_evolution_preserves_trace((dim, g, p) in dim_and_entries(12), scale in 0.01f64..0.3) {
        let gen = anti_hermitian(dim, &g, scale);
        let pops: Vec<f64> = p.iter().map(|z| z.norm() + 1e-3).collect();
        let total: f64 = pops.iter().sum();
        let rho = DensityOperator::from_populations(&pops.iter().map(|x| x / total).collect::<Vec<_>>());
        let out = apply_unitary_series_density(&gen, &rho, SERIES_TOL).unwrap();
        prop_assert!((out.trace() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn kron_associative_and_adjoint(a in complex_vec(4), b in complex_vec(9), c in complex_vec(4)) {
        let a = ComplexMatrix::from_vec(2, 2, a);
        let b = ComplexMatrix::from_vec(3, 3, b);
        let c = ComplexMatrix::from_vec(2, 2, c);
        prop_assert!(max_abs(&(kron(&kron(&a, &b), &c) - kron(&a, &kron(&b, &c)))) <= 1e-15);
        prop_assert_eq!(kron(&a, &b).adjoint(), kron(&a.adjoint(), &b.adjoint()));
    }

    #[test]
    fn kron_associative_exactly_on_gaussian_integers(
        a in prop::collection::vec((-9i32..9, -9i32..9), 4),
        b in prop::collection::vec((-9i32..9, -9i32..9), 9),
        c in prop::collection::vec((-9i32..9, -9i32..9), 6),
    ) {
        let to = |v: Vec<(i32, i32)>| v.into_iter().map(|(x, y)| C64::new(x as f64, y as f64));
        let a = ComplexMatrix::from_iterator(2, 2, to(a));
        let b = ComplexMatrix::from_iterator(3, 3, to(b));
        let c = ComplexMatrix::from_iterator(2, 3, to(c));
        prop_assert_eq!(kron(&kron(&a, &b), &c), kron(&a, &kron(&b, &c)));
    }

    #[test]
    fn thermal_truncation(mean in 0.0f64..60.0) {
        let cutoff = thermal_cutoff(mean, THERMAL_TAIL);
        let pops = thermal_populations(mean, cutoff);
        prop_assert!(pops.iter().all(|&p| p > 0.0 || mean == 0.0));
        prop_assert!(pops.iter().sum::<f64>() >= 1.0 - THERMAL_TAIL);
    }

    #[test]
    fn mixed_and_pure_weak_values_agree(psi in complex_vec(3), phi in complex_vec(3)) {
        let psi = normalized(psi);
        let phi = normalized(phi);
        prop_assume!((psi.norm() - 1.0).abs() < 1e-12 && (phi.norm() - 1.0).abs() < 1e-12);
        prop_assume!(phi.dotc(&psi).norm() > 0.05);
        let tri = build_tri_mode();
        let sys = SystemSpec::new(tri.jx.clone(), tri.jy.clone(), State::Pure(psi.clone())).unwrap();
        let pure = weak_values(&psi, &phi, &sys).unwrap();
        let mixed = weak_values_mixed(&sys.state, &phi, &sys).unwrap();
        let scale = 1.0f64.max(pure.jx.norm()).max(pure.jy.norm());
        prop_assert!((pure.jx - mixed.jx).norm() <= 1e-12 * scale);
        prop_assert!((pure.jy - mixed.jy).norm() <= 1e-12 * scale);
    }

    #[test]
    fn weak_values_periodic_in_theta(delta in 0.01f64..0.99, theta in -PI..PI) {
        let sys = build_tri_mode();
        let psi = sys.state.as_ket().unwrap().clone();
        let a = weak_values(&psi, &postselection_ket(&PostselectionSpec::new(delta, theta).unwrap()), &sys).unwrap();
        let b = weak_values(&psi, &postselection_ket(&PostselectionSpec::new(delta, theta + 2.0 * PI).unwrap()), &sys).unwrap();
        let scale = a.jx.norm();
        prop_assert!((a.jx - b.jx).norm() <= 1e-12 * scale);
        prop_assert!((a.jy - b.jy).norm() <= 1e-12 * scale);
    }

    #[test]
    fn thermal_factor_is_one_plus_n_times_coherent(mean in 0.0f64..100.0, delta in 0.01f64..0.99) {
        let t = amplification_factor(StateKind::Thermal, mean, delta);
        let c = amplification_factor(StateKind::Coherent, mean, delta);
        prop_assert!((t - (1.0 + mean) * c).abs() <= 1e-12 * t);
    }

    #[test]
    fn displaced_overlap_matches_oracle(m in 0usize..=20, k in 0usize..=20, alpha in 0.0f64..0.1) {
        let v = displaced_overlap_checked(m, k, alpha, m + k + 40).unwrap();
        prop_assert_eq!(v, displaced_overlap(m, k, alpha));
    }

    #[test]
    fn displacement_is_unitary(k in 0usize..=20, alpha in 0.0f64..0.5) {
        let cutoff = k + 60;
        let total: f64 = (0..cutoff).map(|m| displaced_overlap(m, k, alpha).powi(2)).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exact_probability_is_a_probability(g0 in 0.0f64..5e3, delta in 0.05f64..0.95, theta in -PI..PI, beta in -PI..PI, mean in 0.0f64..4.0) {
        let cfg = ExperimentConfig::new(1e6, g0);
        let sim = ExactSimulation::new(&cfg, &MirrorState::Coherent { mean, phase: beta }).unwrap();
        let ps = PostselectionSpec::new(delta, theta).unwrap();
        let p = sim.ps_probability(&ps);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p));

        let tri = build_tri_mode();
        let first = postselection_probability_first_order(cfg.gamma_eff(), &tri, &sim.pointer, &postselection_ket(&ps)).unwrap();
        if !(0.0..=1.0).contains(&first.value) {
            prop_assert!(!first.regime_ok);
        }
    }

    #[test]
    fn thermal_quadratures_quarter_period_apart(mean in 0.0f64..5.0, delta in 0.1f64..0.9, theta in -PI..PI) {
        let cfg = ExperimentConfig::new(1e6, 500.0);
        let sim = ExactSimulation::new(&cfg, &MirrorState::Thermal { mean }).unwrap();
        let ps = PostselectionSpec::new(delta, theta).unwrap();
        let times = period_times(cfg.omega, 8);
        let shifted: Vec<f64> = times.iter().map(|t| t - PI / (2.0 * cfg.omega)).collect();
        let x = sim.conditional_quadrature(&ps, Quadrature::X, &times).unwrap();
        let y = sim.conditional_quadrature(&ps, Quadrature::Y, &shifted).unwrap();
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a.expectation - b.expectation).abs() <= 1e-9);
        }
    }

    #[test]
    fn thermal_first_order_probability_has_no_linear_term(mean in 0.0f64..10.0, delta in 0.05f64..0.95, theta in -PI..PI) {
        let cfg = ExperimentConfig::new(1e6, 500.0);
        let ptr = MirrorState::Thermal { mean }.pointer(cfg.omega).unwrap();
        let ps = PostselectionSpec::new(delta, theta).unwrap();
        let p = postselection_probability_first_order(cfg.gamma_eff(), &build_tri_mode(), &ptr, &postselection_ket(&ps)).unwrap();
        prop_assert!((p.value - delta * delta).abs() <= 1e-14);
    }

    #[test]
    fn unitary_on_joint_space_is_norm_preserving(cutoff in 3usize..40, g in 0.0f64..0.05, v in complex_vec(120)) {
        let osc = build_oscillator(cutoff).unwrap();
        let tri = build_tri_mode();
        let gen = (kron(&tri.jx, &osc.y) + kron(&tri.jy, &osc.x)) * C64::new(0.0, -g);
        let v = normalized(v[..3 * cutoff].to_vec());
        let w = apply_unitary_series(&gen, &v, SERIES_TOL).unwrap();
        prop_assert!((w.norm() - v.norm()).abs() <= 1e-10);
        let u = dense_exp_anti_hermitian(&gen).unwrap();
        prop_assert!(max_abs(&(u.adjoint() * &u - ComplexMatrix::identity(3 * cutoff, 3 * cutoff))) <= 1e-10);
    }
}

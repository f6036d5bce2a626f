use std::f64::consts::PI;

use lkg_core::calculus::{kg_propagate, PropagatorCache};
use lkg_core::cocycle::{rotation_number, transfer, TransferMatrix};
use lkg_core::lattice::{
    build_operator, eigen, eigen_count_below, sturm_count, JacobiMatrix, LatticeWindow,
    OperatorKind,
};
use lkg_core::numeric::{dist_to_pi_lattice, lp_norm, reduce_mod_pi};
use lkg_core::oscillatory::{free_kernel, KernelKind};
use lkg_core::potential::TrigPolynomialPotential;
use proptest::prelude::*;

fn golden() -> [f64; 1] {
    [PI * (5f64.sqrt() - 1.0)]
}

fn operator(half: usize, lambda: f64, theta: f64, kind: OperatorKind) -> JacobiMatrix {
    let v = TrigPolynomialPotential::cosine(lambda, 0.5).unwrap();
    build_operator(&v, &golden(), &[theta], LatticeWindow::new(half), kind, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn potential_is_real_and_periodic(lambda in 0.0..1.0f64, theta in -10.0..10.0f64) {
        let v = TrigPolynomialPotential::cosine(lambda, 0.5).unwrap();
        let z = v.evaluate_complex(&[theta]);
        prop_assert!(z.im.abs() <= 1e-12 * (1.0 + z.re.abs()));
        prop_assert!((v.evaluate(&[theta]) - v.evaluate(&[theta + 2.0 * PI])).abs() < 1e-12);
        prop_assert!(v.evaluate(&[theta]).abs() <= v.analytic_majorant() + 1e-12);
    }

    #[test]
    fn transfer_matrices_are_unimodular(e in -3.0..3.0f64, lambda in 0.0..1.0f64, theta in 0.0..6.3f64) {
        let v = TrigPolynomialPotential::cosine(lambda, 0.5).unwrap();
        let a = transfer(e, &v, &[theta]);
        let b = TransferMatrix::schrodinger(e * 0.5);
        prop_assert!((a.det() - 1.0).abs() < 1e-12);
        prop_assert!((a.mul(&b).det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_number_is_monotone(e in -2.5..2.4f64, de in 0.01..0.5f64) {
        let v = TrigPolynomialPotential::cosine(0.1, 0.5).unwrap();
        let lo = rotation_number(e, &v, &golden(), &[0.3], 4000);
        let hi = rotation_number(e + de, &v, &golden(), &[0.3], 4000);
        prop_assert!((0.0..=PI).contains(&lo.rho));
        prop_assert!(hi.rho + lo.err + hi.err >= lo.rho);
    }

    #[test]
    fn sturm_count_is_monotone_and_bounded(half in 5usize..40, x in -3.0..3.0f64, dx in 0.0..1.0f64, theta in 0.0..6.3f64) {
        let h = operator(half, 0.3, theta, OperatorKind::Schrodinger);
        let (a, b) = (sturm_count(&h, x), sturm_count(&h, x + dx));
        prop_assert!(a <= b && b <= h.len());
        prop_assert_eq!(eigen_count_below(&h, x), a);
    }

    #[test]
    fn eigen_decomposition_is_orthonormal(half in 3usize..30, lambda in 0.0..0.5f64, theta in 0.0..6.3f64) {
        let h = operator(half, lambda, theta, OperatorKind::Schrodinger);
        let d = eigen(&h, true);
        prop_assert!(d.values().windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(d.orthogonality_error().unwrap() <= 1e-10);
        prop_assert!(d.max_relative_residual(&h).unwrap() <= 1e-10);
        let trace: f64 = h.diag().iter().sum();
        let sum: f64 = d.values().iter().sum();
        prop_assert!((trace - sum).abs() <= 1e-9 * (1.0 + trace.abs()));
    }

    #[test]
    fn mod_pi_distance_is_symmetric(x in -50.0..50.0f64) {
        let r = reduce_mod_pi(x, 0.0);
        prop_assert!(r.abs() <= PI / 2.0 + 1e-12);
        let d = dist_to_pi_lattice(&[1], &[x]);
        prop_assert!((d - dist_to_pi_lattice(&[-1], &[x])).abs() < 1e-12);
        prop_assert!(d <= PI / 2.0 + 1e-12);
    }

    #[test]
    fn lp_norms_are_ordered(v in prop::collection::vec(-10.0..10.0f64, 1..40)) {
        let n2 = lp_norm(&v, 2.0);
        let n4 = lp_norm(&v, 4.0);
        let ninf = lp_norm(&v, f64::INFINITY);
        prop_assert!(ninf <= n4 * (1.0 + 1e-12) && n4 <= n2 * (1.0 + 1e-12));
    }

    #[test]
    fn free_kernel_is_even_in_site(n in 0i64..30, t in 0.0..40.0f64) {
        let a = free_kernel(n, t, 1.0, KernelKind::Cos).unwrap();
        let b = free_kernel(-n, t, 1.0, KernelKind::Cos).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(a.abs() <= 1.0 + 1e-9);
    }

    #[test]
    fn propagation_conserves_energy(t in -30.0..30.0f64, theta in 0.0..6.3f64, seed in 0usize..5) {
        let w = LatticeWindow::new(40);
        let cache = PropagatorCache::from_operator(&operator(40, 0.05, theta, OperatorKind::KleinGordon)).unwrap();
        let phi = w.delta(seed as i64).unwrap();
        let psi = w.delta(-(seed as i64) - 1).unwrap();
        let s0 = kg_propagate(&cache, &phi, &psi, 0.0).unwrap();
        let s = kg_propagate(&cache, &phi, &psi, t).unwrap();
        let (e0, e) = (cache.linear_energy(&s0).unwrap(), cache.linear_energy(&s).unwrap());
        prop_assert!(((e - e0) / e0).abs() < 1e-10);
        let back = kg_propagate(&cache, &s.u, &s.v, -t).unwrap();
        prop_assert!(back.u.iter().zip(&phi).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}

use std::sync::Arc;

use entropic_core::continuation::dirichlet_eigenpairs;
use entropic_core::degree::{brouwer_degree, stabilized_degree, Confidence, DegreeOptions, FieldMap, RegionSpec};
use entropic_core::grid::{FeFunction, Mesh};
use entropic_core::measures::{DensityExpr, MeasureData};
use entropic_core::structural::{phi_metric, phi_p, phi_p_prime, psi, psi_prime, CoefficientField};
use proptest::prelude::*;

fn square(n: usize) -> Arc<Mesh<f64>> {
    Arc::new(Mesh::unit_square(n).unwrap())
}

fn field_from(mesh: &Arc<Mesh<f64>>, seed: &[f64]) -> FeFunction<f64> {
    let dofs: Vec<f64> = (0..mesh.n_dofs()).map(|i| seed[i % seed.len()] * (1.0 + i as f64).sin()).collect();
    FeFunction::from_dofs(mesh, &dofs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_and_psi_are_odd_lipschitz_and_ordered(s in -50.0f64..50.0, t in -50.0f64..50.0, p in 1.1f64..4.0) {
        prop_assert!((phi_p(-s, p) + phi_p(s, p)).abs() <= 1e-12 * (1.0 + phi_p(s, p).abs()));
        prop_assert!((psi(-s) + psi(s)).abs() <= 1e-12 * (1.0 + psi(s).abs()));
        prop_assert!((phi_p(s, p) - phi_p(t, p)).abs() <= (s - t).abs() * (1.0 + 1e-9) + 1e-12);
        prop_assert!((psi(s) - psi(t)).abs() <= (s - t).abs() * (1.0 + 1e-9) + 1e-12);
        let (dp, ds) = (phi_p_prime(s, p), psi_prime::<f64>(s));
        prop_assert!(dp > 0.0 && dp <= 1.0);
        prop_assert!(ds > 0.0 && ds <= dp * (1.0 + 1e-12));
    }

    #[test]
    fn cell_volumes_sum_to_domain_measure(n in 2usize..24) {
        let total: f64 = square(n).integrate(|_| 1.0);
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let disk = Mesh::<f64>::radial(2, 1.0, n).unwrap();
        prop_assert!((disk.integrate(|_| 1.0) - std::f64::consts::PI).abs() <= 1e-12);
    }

    #[test]
    fn linear_interpolation_has_exact_gradient_norm(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, p in 1.1f64..4.0) {
        let mesh = square(5);
        let u = FeFunction::interpolate(&mesh, |x| a * x[0] + b * x[1] + c);
        let exact = (a * a + b * b).sqrt();
        prop_assert!((u.grad_p_norm(p) - exact).abs() <= 1e-12 * (1.0 + exact));
    }

    #[test]
    fn phi_metric_is_a_metric(x in prop::collection::vec(-4.0f64..4.0, 3..6), y in prop::collection::vec(-4.0f64..4.0, 3..6),
                              z in prop::collection::vec(-4.0f64..4.0, 3..6), p in 1.2f64..3.0) {
        let mesh = square(4);
        let (u, v, w) = (field_from(&mesh, &x), field_from(&mesh, &y), field_from(&mesh, &z));
        let d = |a: &FeFunction<f64>, b: &FeFunction<f64>| phi_metric(a, b, p).unwrap();
        prop_assert_eq!(d(&u, &u), 0.0);
        prop_assert!((d(&u, &v) - d(&v, &u)).abs() <= 1e-12);
        prop_assert!(d(&u, &w) <= d(&u, &v) + d(&v, &w) + 1e-12);
    }

    #[test]
    fn pairing_agrees_with_decomposition(x in prop::collection::vec(-8.0f64..8.0, 2..5), g0 in -2.0f64..2.0, g1 in -2.0f64..2.0) {
        let mesh = square(8);
        let v = field_from(&mesh, &x);
        let eig = MeasureData::density(DensityExpr::FirstEigenmode { amplitude: 3.0 });
        let d = eig.pairing(&v).unwrap() - eig.pairing_via_decomposition(&v).unwrap();
        prop_assert!(d.abs() <= 1e-10);
        let line = MeasureData::line_charge([0.25, 0.5], [0.75, 0.5], [g0, g1], 2.0, 2).unwrap();
        let d = line.pairing(&v).unwrap() - line.pairing_via_decomposition(&v).unwrap();
        prop_assert!(d.abs() <= 1e-6);
    }

    #[test]
    fn asymptotic_flux_is_homogeneous(xi0 in -5.0f64..5.0, xi1 in -5.0f64..5.0, tau in 0.01f64..100.0, p in 1.2f64..4.0) {
        let field = CoefficientField::p_laplacian(p, 1e-6);
        let a = &field.asymptotics.as_ref().unwrap().a;
        let x = [0.3, 0.7];
        let xi = [xi0, xi1];
        let txi = [tau * xi0, tau * xi1];
        let dot = |u: [f64; 2], v: [f64; 2]| u[0] * v[0] + u[1] * v[1];
        let lhs = dot(a.eval(&x, &txi), txi);
        let rhs = tau.powf(p) * dot(a.eval(&x, &xi), xi);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        prop_assert!(dot(a.eval(&x, &xi), xi) >= dot(xi, xi).powf(p / 2.0) * (1.0 - 1e-12));
        let neg = a.eval(&x, &[-xi0, -xi1]);
        let pos = a.eval(&x, &xi);
        prop_assert!((neg[0] + pos[0]).abs() <= 1e-12 && (neg[1] + pos[1]).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn certified_degree_of_odd_field_is_odd(f in 0.1f64..3.0) {
        let mesh = square(3);
        let eig: Vec<f64> = dirichlet_eigenpairs(&mesh, mesh.n_dofs(), 1e-13).unwrap().into_iter().map(|e| e.0).collect();
        prop_assume!(eig.iter().all(|&l| (f * eig[0] / l - 1.0).abs() > 0.05));
        let field = CoefficientField::p_laplacian(2.0, 0.0).with_power_reaction(f * eig[0]);
        let r = stabilized_degree(&field, &MeasureData::zero(), &mesh, &RegionSpec::PhiBall { radius: 5.0 }, &DegreeOptions::default()).unwrap();
        prop_assert_eq!(r.confidence, Confidence::CertifiedSmallN);
        prop_assert!(r.value % 2 != 0);
        let below = eig.iter().filter(|&&l| l < f * eig[0]).count();
        prop_assert_eq!(r.value, if below % 2 == 0 { 1 } else { -1 });
    }

    #[test]
    fn excising_a_solution_free_box_keeps_the_degree(c in -2.0f64..2.0, r in 0.05f64..0.4) {
        prop_assume!(c.abs() > r + 0.2);
        let mesh = square(3);
        let load = MeasureData::density(DensityExpr::Constant(1.0)).discretize_load(&mesh).unwrap();
        let map = FieldMap { field: CoefficientField::p_laplacian(1.5, 1e-6), load, mesh };
        let base = RegionSpec::NodalBox { lo: -3.0, hi: 3.0 };
        let hole = RegionSpec::NodalBox { lo: c - r, hi: c + r };
        let opts = DegreeOptions::default();
        let whole = brouwer_degree(&map, &base, &opts).unwrap();
        let cut = brouwer_degree(&map, &RegionSpec::Excise { base: Box::new(base), hole: Box::new(hole) }, &opts).unwrap();
        prop_assert_eq!(whole.value, 1);
        prop_assert_eq!(cut.value, whole.value);
    }
}

#[test]
fn first_eigenvector_of_coarse_square_has_one_sign() {
    let eig = dirichlet_eigenpairs(&square(3), 2, 1e-13).unwrap();
    assert!(eig[0].0 > 0.0);
    assert!(eig[1].0 > eig[0].0 * 1.5);
    assert!(eig[0].1.values().iter().all(|v| *v >= 0.0) || eig[0].1.values().iter().all(|v| *v <= 0.0));
}

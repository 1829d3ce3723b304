use std::sync::Arc;

use entropic_core::bench::{suite, Benchmark, MeshFamily};
use entropic_core::continuation::{run_fredholm_path, PathOptions, PathStatus};
use entropic_core::degree::{stabilized_degree, DegreeOptions, RegionSpec};
use entropic_core::grid::{FeFunction, Mesh};
use entropic_core::measures::{DensityExpr, LineCharge, MeasureData};
use entropic_core::solve::{assemble_residual, solve_direct, SolverOptions};
use entropic_core::structural::{phi_norm, psi_sup, scaling_homotopy, truncation_homotopy};

fn coarse(b: &Benchmark) -> Arc<Mesh<f64>> {
    match b.family {
        MeshFamily::Disk => b.mesh(8),
        MeshFamily::UnitSquare => b.mesh(4),
    }
    .unwrap()
}

/// `t * mu`.
fn scaled(mu: &MeasureData<f64>, t: f64) -> MeasureData<f64> {
    match mu {
        MeasureData::Density(d) => {
            let e = d.expr.clone();
            let mut out = MeasureData::density(DensityExpr::Custom(Arc::new(move |x| t * e.eval(x))));
            if let (MeasureData::Density(o), Some(m)) = (&mut out, d.lm_tag) {
                o.lm_tag = Some(m);
            }
            out
        }
        MeasureData::LineCharge(l) => MeasureData::LineCharge(LineCharge { a: l.a, b: l.b, g: [t * l.g[0], t * l.g[1]] }),
        MeasureData::WeakForm(_) => unreachable!("no benchmark uses a weak form"),
    }
}

#[test]
fn limit_problem_has_zero_as_exact_solution() {
    for b in suite() {
        let mesh = b.mesh(b.levels[0]).unwrap();
        let f0 = scaling_homotopy(&b.field, 0.0).unwrap();
        let load = vec![0.0; mesh.n_dofs()];
        let r = assemble_residual(&f0, &load, &FeFunction::zeros(&mesh)).unwrap();
        let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-12, "{}: residual {worst:e}", b.name);
    }
}

#[test]
fn stabilized_degree_is_constant_along_the_scaling_homotopy() {
    let opts = DegreeOptions::default();
    for b in suite() {
        let mesh = coarse(&b);
        let solver = SolverOptions::default();
        let target = if b.field.has_lower_order_term() { truncation_homotopy(&b.field, 1.0 / 64.0).unwrap() } else { b.field.clone() };
        let (u, _) = solve_direct(&target, &b.mu, &mesh, &solver, None).unwrap();
        let ceiling = psi_sup::<f64>() * b.mu.total_variation(&mesh).unwrap().value + b.field.growth.alpha0_l1(&mesh);
        let region = RegionSpec::PhiBall { radius: 2.0 * ceiling + 2.0 * phi_norm(&u, b.p()) + 1.0 };
        // no Jacobian at 0 for p < 2
        let t0 = if b.p() < 2.0 { 1e-3 } else { 0.0 };
        let values: Vec<i64> = [t0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&t| {
                let ft = scaling_homotopy(&b.field, t).unwrap();
                stabilized_degree(&ft, &scaled(&b.mu, t), &mesh, &region, &opts).unwrap().value
            })
            .collect();
        assert!(values.iter().all(|&v| v == 1), "{}: {values:?}", b.name);
    }
}

#[test]
fn coercive_paths_reach_the_target_within_the_estimate() {
    for b in suite().into_iter().filter(|b| !b.field.has_lower_order_term()) {
        let mesh = b.mesh(b.levels[0]).unwrap();
        let rep = run_fredholm_path(&b.field, &b.mu, &mesh, &PathOptions::default()).unwrap();
        assert!(matches!(rep.status, PathStatus::Reached { .. }), "{}: {}", b.name, rep.status.label());
        let ceiling = (psi_sup::<f64>() * b.mu.total_variation(&mesh).unwrap().value + b.field.growth.alpha0_l1(&mesh)) / b.field.nu();
        let end = rep.final_phi_norm().unwrap();
        assert!(end <= ceiling * (1.0 + 1e-2), "{}: {end} > {ceiling}", b.name);
        assert!(rep.samples.iter().all(|s| s.phi_norm <= rep.r_max));
    }
}

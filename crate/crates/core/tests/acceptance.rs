//! Acceptance criteria. Prints one line per criterion and exits nonzero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use entropic_core::bench::{self, suite, Benchmark, MeshFamily, BENCH_EPS};
use entropic_core::continuation::{dirichlet_eigenpairs, mass_alignment, run_fredholm_path, PathOptions, PathStatus};
use entropic_core::degree::{stabilized_degree, Confidence, DegreeOptions, RegionSpec};
use entropic_core::grid::Mesh;
use entropic_core::measures::{DensityExpr, MeasureData};
use entropic_core::solve::{solve_entropy, Schedule, SolverOptions};
use entropic_core::structural::field::{ArctanReaction, DataFn, ZeroSource};
use entropic_core::structural::CoefficientField;
use entropic_core::verify::{
    check_comparison, check_uniqueness, convergence_study, regularity_sweep, truncation_stability, VerifyOptions,
};
use entropic_core::Result;

type Outcome = Result<(bool, String)>;

fn sci(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", items.join(", "))
}

fn radial_error(b: &Benchmark, n: usize, at_origin: bool) -> Result<f64> {
    let mesh = b.mesh(n)?;
    let sol = solve_entropy(&b.field, &b.mu, &mesh, &Schedule::default(), &SolverOptions::default())?;
    let exact = b.exact.expect("radial oracle");
    let errs = mesh.nodes().iter().zip(sol.u.values()).map(|(x, v)| (exact(x[0]) - v).abs());
    Ok(if at_origin { errs.take(1).sum() } else { errs.fold(0.0, f64::max) })
}

fn radial_oracle() -> Outcome {
    let t0 = Instant::now();
    let p2 = bench::by_name("disk_p2_const4").expect("benchmark");
    let e: Vec<f64> = [16, 32, 64].iter().map(|&n| radial_error(&p2, n, true)).collect::<Result<_>>()?;
    let orders: Vec<f64> = e.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let p15 = bench::by_name("disk_p1.5_const1").expect("benchmark");
    let sup = radial_error(&p15, 128, false)?;
    let secs = t0.elapsed().as_secs_f64();
    let ok = e[2] <= 2e-2 && orders.iter().all(|&o| o >= 1.8) && sup <= 1e-2 && secs <= 10.0;
    Ok((
        ok,
        format!("err(0)={} (<=2e-2 at n=64) orders={orders:.2?} (>=1.8) p1.5 sup={sup:.3e} (<=1e-2) time={secs:.1}s (<=10)", sci(&e)),
    ))
}

fn a_priori_estimate() -> Outcome {
    let t0 = Instant::now();
    let opts = VerifyOptions::default();
    let mut worst = f64::INFINITY;
    let mut ok = true;
    let mut halving = true;
    for b in suite() {
        let mut tols = Vec::new();
        for mesh in b.meshes()? {
            let tol = opts.tol_h(&mesh);
            let sol = solve_entropy(&b.field, &b.mu, &mesh, &opts.schedule, &opts.solver)?;
            ok &= sol.estimate_slack >= -tol;
            worst = worst.min(sol.estimate_slack / tol);
            tols.push(tol);
        }
        halving &= tols.windows(2).all(|w| (w[1] / w[0] - 0.5).abs() < 1e-9);
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok((
        ok && halving && secs <= 120.0,
        format!("8x3 solves, min slack/tol_h={worst:.3e} (>=-1) tol_h halving={halving} time={secs:.1}s (<=120)"),
    ))
}

fn energy_identity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for b in suite().into_iter().filter(|b| b.exact.is_some()) {
        let mut r = Vec::new();
        for mesh in b.meshes()? {
            r.push(solve_entropy(&b.field, &b.mu, &mesh, &Schedule::default(), &SolverOptions::default())?.energy_residual);
        }
        ok &= r.windows(2).all(|w| w[1] < w[0]) && r[2] <= 5e-3;
        parts.push(format!("{}={:.2e}", b.name, r[2]));
    }
    Ok((ok, format!("decreasing, finest <=5e-3: {}", parts.join(" "))))
}

fn comparison() -> Outcome {
    let lo = MeasureData::density(DensityExpr::FirstEigenmode { amplitude: 1.0 });
    let hi = MeasureData::density(DensityExpr::Constant(1.0));
    let viol = |field: &CoefficientField<f64>| -> Result<Vec<f64>> {
        [8, 16, 32]
            .iter()
            .map(|&n| {
                let mesh = Arc::new(Mesh::unit_square(n)?);
                let c = check_comparison(field, &lo, &hi, &mesh, &Schedule::default(), &SolverOptions::default(), 0.0)?;
                Ok(c.margin.max(0.0))
            })
            .collect()
    };
    let v2 = viol(&CoefficientField::p_laplacian(2.0, 0.0))?;
    let v15 = viol(&CoefficientField::p_laplacian(1.5, BENCH_EPS))?;
    let ok = v2.iter().all(|&v| v <= 1e-10) && v15.windows(2).all(|w| w[1] <= w[0]);
    Ok((ok, format!("p=2 violations={} (<=1e-10) p=1.5 violations={} (non-increasing)", sci(&v2), sci(&v15))))
}

fn uniqueness() -> Outcome {
    let opts = VerifyOptions::default();
    let mut worst: f64 = 0.0;
    let mut n_checks = 0;
    for b in suite() {
        for mesh in b.meshes()? {
            let sol = solve_entropy(&b.field, &b.mu, &mesh, &opts.schedule, &opts.solver)?;
            let c = check_uniqueness(&b.field, &b.mu, &sol, 5, opts.seed, &opts.solver)?;
            worst = worst.max(c.margin);
            n_checks += 1;
        }
    }
    let tol = 10.0 * SolverOptions::<f64>::default().newton_tol;
    Ok((worst <= tol, format!("{n_checks} problems x 5 guesses, worst sup gap={worst:.2e} (<= {tol:.0e})")))
}

fn solution_map_convergence() -> Outcome {
    let levels: Vec<f64> = (0..=12).map(|k| 2f64.powi(k)).collect();
    let mesh = Arc::new(Mesh::radial(2, 1.0, 64)?);
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["disk_p2_inv_r", "disk_p1.8_inv_r"] {
        let b = bench::by_name(name).expect("benchmark");
        let t = convergence_study(&b.field, &b.mu, &mesh, &levels, &SolverOptions::default())?;
        let nm = t.non_monotone_steps();
        let worst = t.worst_below(1e-3);
        ok &= nm <= 1 && worst.is_some_and(|d| d <= 1e-2);
        parts.push(format!("{name}: non-monotone={nm} (<=1) d at data<=1e-3: {} (<=1e-2)", sci(&worst.into_iter().collect::<Vec<_>>())));
    }
    Ok((ok, parts.join("; ")))
}

fn fredholm_resonance() -> Outcome {
    let t0 = Instant::now();
    let l: Vec<f64> = [16, 32]
        .iter()
        .map(|&n| Ok(dirichlet_eigenpairs(&Arc::new(Mesh::unit_square(n)?), 1, 1e-14)?[0].0))
        .collect::<Result<_>>()?;
    let extrapolated = (4.0 * l[1] - l[0]) / 3.0;
    let l1_err = (extrapolated / (2.0 * PI * PI) - 1.0).abs();

    let mesh = Arc::new(Mesh::unit_square(16)?);
    let (l1, e1) = dirichlet_eigenpairs(&mesh, 1, 1e-14)?.remove(0);
    let mu = MeasureData::density(DensityExpr::FirstEigenmode { amplitude: 0.01 });
    let path = |f: f64| {
        let field = CoefficientField::p_laplacian(2.0, 0.0).with_power_reaction(f * l1);
        run_fredholm_path(&field, &mu, &mesh, &PathOptions::default())
    };
    let mut phi = Vec::new();
    for f in [0.5, 0.9, 0.95, 0.99] {
        phi.push(path(f)?.final_phi_norm().unwrap_or(f64::NAN));
    }
    // d(u, 0) = phi_norm^{1/p} is linear in the amplitude.
    let ratio_err: Vec<f64> = [(2, 0.95), (3, 0.99)]
        .iter()
        .map(|&(i, f)| ((phi[i] / phi[1]).sqrt() / ((1.0 - 0.9) / (1.0 - f)) - 1.0).abs())
        .collect();
    let growth = phi[3] / phi[0];
    let align = match path(1.0)?.status {
        PathStatus::BlowUp { candidate, .. } => mass_alignment(&candidate, &e1)?,
        _ => 0.0,
    };
    let secs = t0.elapsed().as_secs_f64();
    let ok = l1_err <= 1e-2
        && ratio_err.iter().all(|&e| e <= 0.2)
        && growth > 10.0
        && align >= 0.99
        && secs <= 120.0;
    Ok((
        ok,
        format!(
            "lambda1 extrapolated={extrapolated:.4} rel err={l1_err:.2e} (<=1e-2) ratio errs={ratio_err:.3?} (<=0.2) \
             phi(0.99)/phi(0.5)={growth:.1} (>10) blow-up alignment={align:.6} (>=0.99) time={secs:.1}s (<=120)"
        ),
    ))
}

fn odd_degree() -> Outcome {
    let mesh = Arc::new(Mesh::unit_square(3)?);
    let l1 = dirichlet_eigenpairs(&mesh, 1, 1e-13)?[0].0;
    let ball = RegionSpec::PhiBall { radius: 5.0 };
    let mut ok = mesh.n_dofs() <= 8;
    let mut parts = vec![format!("dofs={}", mesh.n_dofs())];
    for (f, want_one) in [(0.5, true), (1.5, false), (2.5, false)] {
        let field = CoefficientField::p_laplacian(2.0, 0.0).with_power_reaction(f * l1);
        let r = stabilized_degree(&field, &MeasureData::zero(), &mesh, &ball, &DegreeOptions::default())?;
        let certified = r.confidence == Confidence::CertifiedSmallN;
        ok &= certified && r.value % 2 != 0 && (!want_one || r.value == 1);
        parts.push(format!("lambda={f}*lambda1: deg={} zeros={} certified={certified}", r.value, r.solutions.len()));
    }
    Ok((ok, parts.join(" ")))
}

fn arctan_large_c() -> Benchmark {
    let c = 50.0;
    let mut field = CoefficientField::p_laplacian(2.0, 0.0)
        .with_source(Arc::new(ArctanReaction { c }), Some(Arc::new(ZeroSource)));
    field.growth.alpha2 = DataFn::Constant(c * PI / 2.0);
    Benchmark {
        name: "square_p2_atan50_eigenmode",
        family: MeshFamily::UnitSquare,
        levels: [8, 16, 32],
        field,
        mu: MeasureData::density(DensityExpr::FirstEigenmode { amplitude: 10.0 }),
        exact: None,
    }
}

fn truncation_stabilization() -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for b in suite().into_iter().chain([arctan_large_c()]) {
        let coarse = match b.family {
            MeshFamily::Disk => b.mesh(8)?,
            MeshFamily::UnitSquare => b.mesh(4)?,
        };
        let s = truncation_stability(&b.field, &b.mu, &b.mesh(b.levels[0])?, &coarse, &SolverOptions::default(), 3)?;
        let r = s.report(1e-10);
        ok &= r.pass;
        worst = worst.max(r.margin);
        if s.tau_bar < 1.0 || !r.pass {
            parts.push(format!("{}: tau_bar={:.2e} degrees={:?}", b.name, s.tau_bar, s.degrees));
        }
    }
    Ok((ok, format!("9 problems, worst halving change={worst:.2e} (<=1e-10); {}", parts.join("; "))))
}

fn regularity() -> Outcome {
    let b = bench::by_name("disk_p1.8_inv_r").expect("benchmark");
    let disk = regularity_sweep(&b.field, &b.mu, &b.meshes()?, Some(1.3), &Schedule::default(), &SolverOptions::default())?;
    let planar_mu = MeasureData::density_in_lm(
        DensityExpr::RadialPower { exponent: 1.0, center: [0.5, 0.5], coefficient: 1.0 },
        1.9,
    );
    let meshes: Vec<_> = [16, 32, 64].iter().map(|&n| Mesh::unit_square(n).map(Arc::new)).collect::<Result<_>>()?;
    let planar = regularity_sweep(&b.field, &planar_mu, &meshes, Some(1.3), &Schedule::default(), &SolverOptions::default())?;
    let energy = |t: &entropic_core::verify::RegularityTable| t.rows.iter().map(|r| r.energy_norm).collect::<Vec<_>>();
    let ok = disk.variation() <= 0.1 && planar.variation() <= 0.1;
    Ok((
        ok,
        format!(
            "q=1.3 disk variation={:.2e} square variation={:.2e} (<=0.1); raw p-norms disk={:.3?} square={:.3?}",
            disk.variation(),
            planar.variation(),
            energy(&disk),
            energy(&planar)
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("radial oracle accuracy", radial_oracle),
        ("a-priori estimate", a_priori_estimate),
        ("energy identity", energy_identity),
        ("comparison principle", comparison),
        ("uniqueness", uniqueness),
        ("solution map convergence", solution_map_convergence),
        ("resonance study", fredholm_resonance),
        ("odd degree", odd_degree),
        ("truncation stabilization", truncation_stabilization),
        ("regularity exponents", regularity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (pass, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!("criterion {:>2} {} {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

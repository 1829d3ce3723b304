//! Executable checks on computed solutions: entropy inequality over a finite
//! test dictionary, a-priori estimate, comparison, uniqueness, regularity and
//! convergence sweeps, truncation stabilization.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::Benchmark;
use crate::degree::{brouwer_degree, stabilized_degree, DegreeOptions, FieldMap, RegionSpec};
use crate::error::{Error, Result};
use crate::grid::{FeFunction, Geometry, Mesh};
use crate::measures::{DensityExpr, MeasureData};
use crate::report::Provenance;
use crate::scalar::dot;
use crate::solve::{
    solve_direct, solve_entropy, solve_truncated, EntropySolution, Schedule, SolverOptions,
};
use crate::structural::{phi_metric, psi_sup, truncate_tk, truncation_homotopy, CoefficientField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Hypotheses not met or bound unavailable.
    Skipped,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    /// Worst violation; the check passes when `margin <= tol`.
    pub margin: f64,
    pub witness: String,
    pub pass: bool,
    pub tol: f64,
    pub status: CheckStatus,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, margin: f64, tol: f64, witness: impl Into<String>) -> Self {
        let pass = margin <= tol;
        CheckReport {
            name: name.into(),
            margin,
            witness: witness.into(),
            pass,
            tol,
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        }
    }

    pub fn skipped(name: impl Into<String>, why: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            margin: 0.0,
            witness: why.into(),
            pass: false,
            tol: 0.0,
            status: CheckStatus::Skipped,
        }
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "skip",
        };
        write!(f, "{s} {} margin={:.3e} tol={:.3e} witness={}", self.name, self.margin, self.tol, self.witness)
    }
}

/// Structured-text table plus a `name,margin,pass` summary.
pub fn write_checks<W: Write>(w: &mut W, checks: &[CheckReport], prov: &Provenance) -> Result<()> {
    prov.write_block(w, "verify")?;
    writeln!(w, "note = entropy checks quantify over a finite dictionary of bounded P1 tests only")?;
    writeln!(w)?;
    writeln!(w, "[checks]")?;
    for c in checks {
        writeln!(w, "{c}")?;
    }
    writeln!(w)?;
    writeln!(w, "[summary]")?;
    writeln!(w, "name,margin,pass")?;
    for c in checks {
        let p = match c.status {
            CheckStatus::Pass => "true",
            CheckStatus::Fail => "false",
            CheckStatus::Skipped => "skipped",
        };
        writeln!(w, "{},{:.6e},{p}", c.name, c.margin)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// `tol_h = tol_constant * h_max`.
    pub tol_constant: f64,
    pub k_grid: Vec<f64>,
    pub seed: u64,
    pub random_tests: usize,
    pub test_bound: f64,
    pub uniqueness_guesses: usize,
    pub schedule: Schedule<f64>,
    pub solver: SolverOptions<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol_constant: 1e-2,
            k_grid: vec![0.5, 1.0, 2.0, 4.0],
            seed: 0x5eed,
            random_tests: 16,
            test_bound: 8.0,
            uniqueness_guesses: 5,
            schedule: Schedule::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl VerifyOptions {
    pub fn tol_h(&self, mesh: &Mesh<f64>) -> f64 {
        self.tol_constant * mesh.h_max()
    }
}

/// Bump functions at five scales and four centres, plus seeded random nodal
/// fields, all vanishing on the Dirichlet boundary and clipped to `|v| <= bound`.
pub fn test_dictionary(mesh: &Arc<Mesh<f64>>, random: usize, bound: f64, seed: u64) -> Vec<(String, FeFunction<f64>)> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for x in mesh.nodes() {
        for c in 0..2 {
            lo[c] = lo[c].min(x[c]);
            hi[c] = hi[c].max(x[c]);
        }
    }
    let at = |f: [f64; 2]| [lo[0] + f[0] * (hi[0] - lo[0]), lo[1] + f[1] * (hi[1] - lo[1])];
    let diam = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let centres = [[0.5, 0.5], [0.3, 0.3], [0.7, 0.6], [0.1, 0.7]];
    let amps: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
    let mut out = Vec::new();
    for (si, scale) in [0.5, 0.35, 0.25, 0.15, 0.1].into_iter().enumerate() {
        for (ci, f) in centres.iter().enumerate() {
            let c = at(*f);
            let s = scale * diam;
            let a = amps[(si + ci) % amps.len()].min(bound);
            let v = FeFunction::interpolate_zero_bc(mesh, |x| {
                let r2 = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (s * s);
                if r2 < 1.0 { a * (1.0 - r2).powi(2) } else { 0.0 }
            });
            out.push((format!("bump(s={scale},c=[{:.2},{:.2}],a={a})", c[0], c[1]), v));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..random {
        let dofs: Vec<f64> = (0..mesh.n_dofs()).map(|_| rng.gen_range(-1.5 * bound..1.5 * bound)).collect();
        let v = FeFunction::from_dofs(mesh, &dofs).map(|x| x.clamp(-bound, bound));
        out.push((format!("random#{i}"), v));
    }
    out
}

/// Density actually solved for at the accepted schedule level.
fn solved_measure(sol: &EntropySolution<f64>, mu: &MeasureData<f64>) -> Result<MeasureData<f64>> {
    match sol.trace.last() {
        Some(step) if !mu.is_bounded_density() => mu.mollify(step.level),
        _ => Ok(mu.clone()),
    }
}

fn load_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `int a . grad w + int b w` with `b` truncated at `1/tau` when given.
fn operator_pairing(field: &CoefficientField<f64>, u: &FeFunction<f64>, w: &FeFunction<f64>) -> f64 {
    let mesh = u.mesh();
    let (uv, wv) = (u.values(), w.values());
    let has_b = field.has_lower_order_term();
    let mut s = 0.0;
    for c in mesh.cells() {
        let xi = c.gradient(uv);
        let gw = c.gradient(wv);
        for q in c.quad() {
            let a = field.a.eval(&q.x, &xi);
            s += q.weight * dot(&a, &gw);
            if has_b {
                s += q.weight * field.b.eval(&q.x, c.value_at(q, uv), &xi) * c.value_at(q, wv);
            }
        }
    }
    s
}

/// Worst `int a . grad T_k(u - v) + int b T_k(u - v) - <mu, T_k(u - v)>` over
/// the dictionary and `k_grid`. The tolerance is `tol_h` plus `k` times the
/// `l^1` gap between the loads of `mu` and of the mollified data actually solved.
pub fn check_entropy_inequality(
    sol: &EntropySolution<f64>,
    field: &CoefficientField<f64>,
    mu: &MeasureData<f64>,
    dictionary: &[(String, FeFunction<f64>)],
    k_grid: &[f64],
    tol_h: f64,
) -> Result<CheckReport> {
    if k_grid.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::invalid("k grid must be positive"));
    }
    let u = &sol.u;
    let mesh = u.mesh();
    let load = mu.discretize_load(mesh)?;
    let gap = load_gap(&load, &solved_measure(sol, mu)?.discretize_load(mesh)?);
    let f = last_truncation(sol, field)?;
    let mut worst = (f64::NEG_INFINITY, String::new(), 0.0);
    for (label, v) in dictionary {
        for &k in k_grid {
            let w = u.zip_map(v, |a, b| truncate_tk(a - b, k))?;
            let lhs = operator_pairing(&f, u, &w);
            let rhs: f64 = load.iter().zip(w.values()).map(|(l, x)| l * x).sum();
            let tol = tol_h + k * gap;
            let excess = lhs - rhs - tol;
            if excess > worst.0 {
                worst = (excess, format!("v={label} k={k} lhs={lhs:.6e} rhs={rhs:.6e}"), tol);
            }
        }
    }
    let (excess, witness, tol) = worst;
    Ok(CheckReport::new("entropy_inequality", excess + tol, tol, witness))
}

fn last_truncation(sol: &EntropySolution<f64>, field: &CoefficientField<f64>) -> Result<CoefficientField<f64>> {
    match sol.trace.last() {
        Some(step) if field.has_lower_order_term() => truncation_homotopy(field, step.tau),
        _ => Ok(field.clone()),
    }
}

/// `nu int |grad phi_p(u)|^p <= ||psi||_inf |mu| + ||alpha_0||_1`, slack `>= -tol_h`.
pub fn check_estimate(sol: &EntropySolution<f64>, field: &CoefficientField<f64>, mu: &MeasureData<f64>, tol_h: f64) -> Result<CheckReport> {
    if matches!(mu, MeasureData::WeakForm(_)) {
        return Ok(CheckReport::skipped("estimate", "total variation of a weak-form measure is not available"));
    }
    let mesh = sol.u.mesh();
    let tv = mu.total_variation(mesh)?;
    let rhs = psi_sup::<f64>() * tv.value + field.growth.alpha0_l1(mesh);
    let lhs = field.nu() * sol.phi_norm;
    let slack = rhs - lhs;
    Ok(CheckReport::new(
        "estimate",
        -slack,
        tol_h,
        format!("lhs={lhs:.6e} rhs={rhs:.6e} tv_exact={}", tv.exact),
    ))
}

/// `|int a . grad v + int b v - <mu, v>|` per bounded test, against `tol_h * max(1, |v|_inf)`
/// plus the data gap of the mollified right-hand side.
pub fn check_weak_identity_bounded_tests(
    sol: &EntropySolution<f64>,
    field: &CoefficientField<f64>,
    mu: &MeasureData<f64>,
    tests: &[(String, FeFunction<f64>)],
    tol_h: f64,
) -> Result<CheckReport> {
    let u = &sol.u;
    let mesh = u.mesh();
    let load = mu.discretize_load(mesh)?;
    let gap = load_gap(&load, &solved_measure(sol, mu)?.discretize_load(mesh)?);
    let f = last_truncation(sol, field)?;
    let mut worst = (f64::NEG_INFINITY, String::new(), 0.0, 0.0);
    for (label, v) in tests {
        let rhs: f64 = load.iter().zip(v.values()).map(|(l, x)| l * x).sum();
        let res = (operator_pairing(&f, u, v) - rhs).abs();
        let vs = v.sup_norm();
        let tol = (tol_h + gap) * vs.max(1.0);
        if res - tol > worst.0 {
            worst = (res - tol, format!("v={label} residual={res:.3e}"), tol, res);
        }
    }
    Ok(CheckReport::new("weak_identity_bounded_tests", worst.3, worst.2, worst.1))
}

/// Relative energy-identity residual against `tol`.
pub fn check_energy(sol: &EntropySolution<f64>, tol: f64) -> CheckReport {
    CheckReport::new("energy_identity", sol.energy_residual, tol, format!("relative={:.3e}", sol.energy_residual))
}

/// `max(u1 - u2)` for `mu1 <= mu2`; skipped if the loads are not ordered.
pub fn check_comparison(
    field: &CoefficientField<f64>,
    mu1: &MeasureData<f64>,
    mu2: &MeasureData<f64>,
    mesh: &Arc<Mesh<f64>>,
    schedule: &Schedule<f64>,
    opts: &SolverOptions<f64>,
    tol: f64,
) -> Result<CheckReport> {
    let (l1, l2) = (mu1.discretize_load(mesh)?, mu2.discretize_load(mesh)?);
    if let Some(n) = mesh.free_nodes().iter().find(|&&n| l1[n] > l2[n] + 1e-14 * l2[n].abs().max(1.0)) {
        return Ok(CheckReport::skipped("comparison", format!("mu1 > mu2 against the basis function of node {n}")));
    }
    let u1 = solve_entropy(field, mu1, mesh, schedule, opts)?.u;
    let u2 = solve_entropy(field, mu2, mesh, schedule, opts)?.u;
    let (mut worst, mut node) = (f64::NEG_INFINITY, 0);
    for (i, (a, b)) in u1.values().iter().zip(u2.values()).enumerate() {
        if a - b > worst {
            worst = a - b;
            node = i;
        }
    }
    Ok(CheckReport::new("comparison", worst, tol, format!("node={node}")))
}

/// Re-solves the final truncated problem from seeded random guesses and
/// compares with the reference in the nodal sup norm.
pub fn check_uniqueness(
    field: &CoefficientField<f64>,
    mu: &MeasureData<f64>,
    sol: &EntropySolution<f64>,
    guesses: usize,
    seed: u64,
    opts: &SolverOptions<f64>,
) -> Result<CheckReport> {
    let mesh = sol.u.mesh();
    let mu_n = solved_measure(sol, mu)?;
    let tau = sol.trace.last().map_or(1.0, |s| s.tau);
    let (reference, _) = solve_truncated(field, &mu_n, mesh, tau, opts, Some(&sol.u))?;
    let scale = reference.sup_norm().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut at) = (0.0f64, 0);
    for g in 0..guesses {
        let dofs: Vec<f64> = (0..mesh.n_dofs()).map(|_| rng.gen_range(-2.0 * scale..2.0 * scale)).collect();
        let guess = FeFunction::from_dofs(mesh, &dofs);
        let (u, _) = solve_truncated(field, &mu_n, mesh, tau, opts, Some(&guess))?;
        let d = u.sup_distance(&reference)?;
        if d >= worst {
            worst = d;
            at = g;
        }
    }
    Ok(CheckReport::new("uniqueness", worst, 10.0 * opts.newton_tol, format!("guess={at} seed={seed}")))
}

#[derive(Debug, Clone)]
pub struct RegularityRow {
    pub h: f64,
    /// `|| |grad u_h|^{p-1} ||_q`.
    pub grad_norm: f64,
    /// `|| |u_h|^{p-1} ||_r`.
    pub value_norm: f64,
    /// `||grad u_h||_p`.
    pub energy_norm: f64,
}

#[derive(Debug, Clone)]
pub struct RegularityTable {
    pub q: f64,
    pub r: f64,
    pub rows: Vec<RegularityRow>,
}

impl RegularityTable {
    /// `max / min - 1` of the tagged gradient norms.
    pub fn variation(&self) -> f64 {
        let (lo, hi) = self.rows.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(r.grad_norm), h.max(r.grad_norm)));
        hi / lo - 1.0
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, prov: &Provenance) -> Result<()> {
        prov.write_comment(w)?;
        writeln!(w, "# q={} r={}", self.q, self.r)?;
        writeln!(w, "h,grad_norm,value_norm,energy_norm")?;
        for r in &self.rows {
            writeln!(w, "{:.12e},{:.12e},{:.12e},{:.12e}", r.h, r.grad_norm, r.value_norm, r.energy_norm)?;
        }
        Ok(())
    }
}

/// Exponents `(q, r)` for the gradient and value norms. With `q` given it must
/// satisfy `1 <= q < N/(N-1)`; otherwise `q = Nm/(N-m)` from the `L^m` tag,
/// which must lie in `1 < m < (p*)'`.
pub fn regularity_exponents(p: f64, n: usize, m_tag: Option<f64>, q: Option<f64>) -> Result<(f64, f64)> {
    let nf = n as f64;
    if p >= nf {
        return Err(Error::invalid("regularity sweep needs p < N"));
    }
    match (q, m_tag) {
        (Some(q), _) => {
            if !(q >= 1.0 && (n == 1 || q < nf / (nf - 1.0))) {
                return Err(Error::invalid(format!("q = {q} outside [1, N/(N-1))")));
            }
            Ok((q, q * (nf - 1.0) / (nf - p)))
        }
        (None, Some(m)) => {
            let ps = nf * p / (nf - p);
            let window = ps / (ps - 1.0);
            if !(m > 1.0 && m < window) {
                return Err(Error::invalid(format!("L^m tag {m} outside (1, {window:.4})")));
            }
            Ok((nf * m / (nf - m), nf * m / (nf - p * m)))
        }
        (None, None) => Err(Error::invalid("regularity sweep needs an L^m tag or an explicit q")),
    }
}

pub fn regularity_sweep(
    field: &CoefficientField<f64>,
    mu: &MeasureData<f64>,
    meshes: &[Arc<Mesh<f64>>],
    q: Option<f64>,
    schedule: &Schedule<f64>,
    opts: &SolverOptions<f64>,
) -> Result<RegularityTable> {
    let p = field.p();
    let n = meshes.first().map_or(2, |m| m.ambient_dim());
    let (q, r) = regularity_exponents(p, n, mu.lm_tag(), q)?;
    let mut rows = Vec::new();
    for mesh in meshes {
        let u = solve_entropy(field, mu, mesh, schedule, opts)?.u;
        rows.push(RegularityRow {
            h: mesh.h_max(),
            grad_norm: u.grad_p_integral((p - 1.0) * q).powf(1.0 / q),
            value_norm: u.integrate_with(|s, _| s.abs().powf((p - 1.0) * r)).powf(1.0 / r),
            energy_norm: u.grad_p_norm(p),
        });
    }
    Ok(RegularityTable { q, r, rows })
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub level: f64,
    /// `||f - T_n f||_1` by quadrature on the mesh.
    pub data_distance: f64,
    pub phi_distance: f64,
    /// `||grad T_k(u_n) - grad T_k(u)||_p` for `k = 1, 2`.
    pub tk_distance: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn non_monotone_steps(&self) -> usize {
        self.rows.windows(2).filter(|w| w[1].phi_distance > w[0].phi_distance * (1.0 + 1e-12) + 1e-14).count()
    }

    /// Largest Phi-distance among rows whose data distance is at most `data_tol`.
    pub fn worst_below(&self, data_tol: f64) -> Option<f64> {
        self.rows.iter().filter(|r| r.data_distance <= data_tol).map(|r| r.phi_distance).reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, prov: &Provenance) -> Result<()> {
        prov.write_comment(w)?;
        writeln!(w, "level,data_distance,phi_distance,tk1_distance,tk2_distance")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:.6e},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.level, r.data_distance, r.phi_distance, r.tk_distance[0], r.tk_distance[1]
            )?;
        }
        Ok(())
    }
}

/// Solves with `w0^n = T_n(f)` for each level and measures the distance to the
/// solution with data `f`.
pub fn convergence_study(
    field: &CoefficientField<f64>,
    mu: &MeasureData<f64>,
    mesh: &Arc<Mesh<f64>>,
    levels: &[f64],
    opts: &SolverOptions<f64>,
) -> Result<ConvergenceTable> {
    let MeasureData::Density(d) = mu else {
        return Err(Error::invalid("convergence study needs a density"));
    };
    let p = field.p();
    let (u, _) = solve_direct(field, mu, mesh, opts, None)?;
    let mut rows = Vec::new();
    let mut guess = None;
    for &n in levels {
        let expr = DensityExpr::Truncated(Box::new(d.expr.clone()), n);
        let data_distance = mesh.integrate(|x| (d.expr.eval(x) - expr.eval(x)).abs());
        let (un, _) = solve_direct(field, &MeasureData::density(expr), mesh, opts, guess.as_ref())?;
        let tk = |k: f64| -> Result<f64> {
            Ok(un.zip_map(&u, |a, b| truncate_tk(a, k) - truncate_tk(b, k))?.grad_p_norm(p))
        };
        rows.push(ConvergenceRow { level: n, data_distance, phi_distance: phi_metric(&un, &u, p)?, tk_distance: [tk(1.0)?, tk(2.0)?] });
        guess = Some(un);
    }
    Ok(ConvergenceTable { rows })
}

/// Halves `tau` past the level where the truncation of `b` becomes inactive
/// and checks that the solution (and the coarse-mesh degree) no longer moves.
#[derive(Debug, Clone)]
pub struct TruncationStability {
    pub tau_bar: f64,
    /// Sup distances between consecutive halvings below `tau_bar`.
    pub distances: Vec<f64>,
    /// Degree values at `tau_bar`, `tau_bar / 2`, ... on the coarse mesh.
    pub degrees: Vec<i64>,
}

pub fn truncation_stability(
    field: &CoefficientField<f64>,
    mu: &MeasureData<f64>,
    mesh: &Arc<Mesh<f64>>,
    coarse: &Arc<Mesh<f64>>,
    opts: &SolverOptions<f64>,
    halvings: usize,
) -> Result<TruncationStability> {
    let mu_n = if mu.is_bounded_density() { mu.clone() } else { mu.mollify(256.0)? };
    let sup_b = |u: &FeFunction<f64>| -> f64 {
        let v = u.values();
        let mut m = 0.0f64;
        for c in u.mesh().cells() {
            let xi = c.gradient(v);
            for q in c.quad() {
                m = m.max(field.b.eval(&q.x, c.value_at(q, v), &xi).abs());
            }
        }
        m
    };
    let mut tau = 1.0;
    let mut u = None;
    for _ in 0..60 {
        let (v, _) = solve_truncated(field, &mu_n, mesh, tau, opts, u.as_ref())?;
        let inactive = !field.has_lower_order_term() || sup_b(&v) * tau < 1.0;
        u = Some(v);
        if inactive {
            break;
        }
        tau *= 0.5;
    }
    let tau_bar = tau;
    let mut distances = Vec::new();
    let mut prev = u.expect("at least one solve");
    for i in 1..=halvings {
        let t = tau_bar * 0.5f64.powi(i as i32);
        let (v, _) = solve_truncated(field, &mu_n, mesh, t, opts, Some(&prev))?;
        distances.push(v.sup_distance(&prev)?);
        prev = v;
    }

    let dopts = DegreeOptions::default();
    let load = mu_n.discretize_load(coarse)?;
    let zero = FeFunction::zeros(coarse);
    let (uc, _) = solve_direct(field, &mu_n, coarse, opts, Some(&zero))?;
    let radius = 2.0 * (psi_sup::<f64>() * mu_n.total_variation(coarse)?.value + field.growth.alpha0_l1(coarse))
        + 2.0 * crate::structural::phi_norm(&uc, field.p())
        + 1.0;
    let region = RegionSpec::PhiBall { radius };
    let stab = stabilized_degree(field, &mu_n, coarse, &region, &dopts)?;
    let tb = stab.tau_bar.unwrap_or(1.0).min(tau_bar);
    let mut degrees = Vec::new();
    for i in 0..=halvings {
        let t = tb * 0.5f64.powi(i as i32);
        let f = if field.has_lower_order_term() { truncation_homotopy(field, t)? } else { field.clone() };
        let map = FieldMap { field: f, load: load.clone(), mesh: Arc::clone(coarse) };
        degrees.push(brouwer_degree(&map, &region, &dopts)?.value);
    }
    Ok(TruncationStability { tau_bar, distances, degrees })
}

impl TruncationStability {
    pub fn report(&self, tol: f64) -> CheckReport {
        let worst = self.distances.iter().copied().fold(0.0, f64::max);
        let degree_changes = self.degrees.windows(2).any(|w| w[0] != w[1]);
        let mut r = CheckReport::new(
            "truncation_stability",
            worst,
            tol,
            format!("tau_bar={:.3e} degrees={:?}", self.tau_bar, self.degrees),
        );
        if degree_changes {
            r.pass = false;
            r.status = CheckStatus::Fail;
        }
        r
    }
}

/// Solves one problem and runs the per-solution checks; `exact` is a radial
/// profile compared nodally when given.
pub fn verify_problem(
    field: &CoefficientField<f64>,
    mu: &MeasureData<f64>,
    mesh: &Arc<Mesh<f64>>,
    exact: Option<fn(f64) -> f64>,
    opts: &VerifyOptions,
) -> Result<Vec<CheckReport>> {
    let tol_h = opts.tol_h(mesh);
    let sol = solve_entropy(field, mu, mesh, &opts.schedule, &opts.solver)?;
    let dict = test_dictionary(mesh, opts.random_tests, opts.test_bound, opts.seed);
    let mut out = vec![
        check_estimate(&sol, field, mu, tol_h)?,
        check_entropy_inequality(&sol, field, mu, &dict, &opts.k_grid, tol_h)?,
        check_weak_identity_bounded_tests(&sol, field, mu, &dict, tol_h)?,
        check_uniqueness(field, mu, &sol, opts.uniqueness_guesses, opts.seed, &opts.solver)?,
        check_energy(&sol, 10.0 * tol_h),
    ];
    if let Some(exact) = exact {
        let worst = mesh
            .nodes()
            .iter()
            .zip(sol.u.values())
            .map(|(x, v)| (exact((x[0] * x[0] + x[1] * x[1]).sqrt()) - v).abs())
            .fold(0.0, f64::max);
        let tol = match mesh.geometry() {
            Geometry::Radial { .. } => 10.0 * tol_h,
            Geometry::Planar => tol_h,
        };
        out.push(CheckReport::new("exact_profile", worst, tol, "sup nodal error"));
    }
    Ok(out)
}

/// Per-solution checks for one benchmark level, named `benchmark/n<level>/check`.
pub fn verify_benchmark(b: &Benchmark, n: usize, opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    let mut out = verify_problem(&b.field, &b.mu, &b.mesh(n)?, b.exact, opts)?;
    for c in &mut out {
        c.name = format!("{}/n{}/{}", b.name, n, c.name);
    }
    Ok(out)
}

/// Every benchmark at every level, one thread per benchmark; results sorted by name.
pub fn verify_suite(suite: &[Benchmark], opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    let results: Vec<Result<Vec<CheckReport>>> = std::thread::scope(|s| {
        let handles: Vec<_> = suite
            .iter()
            .map(|b| {
                s.spawn(move || {
                    let mut all = Vec::new();
                    for &n in &b.levels {
                        all.extend(verify_benchmark(b, n, opts)?);
                    }
                    Ok(all)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("verify worker panicked")).collect()
    });
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    all.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::by_name;

    fn radial_p2() -> (Benchmark, Arc<Mesh<f64>>) {
        let b = by_name("disk_p2_const4").unwrap();
        let m = b.mesh(32).unwrap();
        (b, m)
    }

    #[test]
    fn dictionary_is_bounded_and_vanishes_on_boundary() {
        let m = Arc::new(Mesh::unit_square(8).unwrap());
        let d = test_dictionary(&m, 16, 8.0, 1);
        assert_eq!(d.len(), 36);
        for (_, v) in &d {
            assert!(v.sup_norm() <= 8.0);
            assert!(m.boundary_nodes().iter().all(|&b| v.values()[b] == 0.0));
        }
        let again = test_dictionary(&m, 16, 8.0, 1);
        assert!(d.iter().zip(&again).all(|(a, b)| a.1.values() == b.1.values()));
    }

    #[test]
    fn entropy_inequality_on_radial_oracle() {
        let (b, mesh) = radial_p2();
        let opts = VerifyOptions::default();
        let sol = solve_entropy(&b.field, &b.mu, &mesh, &opts.schedule, &opts.solver).unwrap();
        let dict = test_dictionary(&mesh, 0, 8.0, 0);
        assert_eq!(dict.len(), 20);
        let r = check_entropy_inequality(&sol, &b.field, &b.mu, &dict, &opts.k_grid, 1e-6).unwrap();
        assert!(r.pass, "{r}");
        // v = u gives w = 0 on both sides
        let same = vec![("u".to_string(), sol.u.clone())];
        let r = check_entropy_inequality(&sol, &b.field, &b.mu, &same, &[1.0], 0.0).unwrap();
        assert!(r.margin.abs() < 1e-14);
    }

    #[test]
    fn weak_identity_with_discrete_tests_is_residual_sized() {
        let (b, mesh) = radial_p2();
        let opts = VerifyOptions::default();
        let sol = solve_entropy(&b.field, &b.mu, &mesh, &opts.schedule, &opts.solver).unwrap();
        let dict = test_dictionary(&mesh, 4, 8.0, 3);
        let r = check_weak_identity_bounded_tests(&sol, &b.field, &b.mu, &dict, 0.0).unwrap();
        assert!(r.margin < 1e-8, "{r}");
    }

    #[test]
    fn estimate_trivial_and_scaled() {
        let mesh = Arc::new(Mesh::unit_square(8).unwrap());
        let f = CoefficientField::p_laplacian(2.0, 0.0);
        let s = Schedule::default();
        let o = SolverOptions::default();
        let z = solve_entropy(&f, &MeasureData::zero(), &mesh, &s, &o).unwrap();
        let r = check_estimate(&z, &f, &MeasureData::zero(), 0.0).unwrap();
        assert_eq!(r.margin, 0.0);
        assert!(r.pass);
        let mu1 = MeasureData::density(DensityExpr::Constant(1.0));
        let mu2 = MeasureData::density(DensityExpr::Constant(2.0));
        let r1 = check_estimate(&solve_entropy(&f, &mu1, &mesh, &s, &o).unwrap(), &f, &mu1, 1e-3).unwrap();
        let r2 = check_estimate(&solve_entropy(&f, &mu2, &mesh, &s, &o).unwrap(), &f, &mu2, 1e-3).unwrap();
        assert!(r1.pass && r2.pass);
        let wf = MeasureData::weak_form(DensityExpr::Zero, crate::measures::VectorExpr::Zero);
        assert_eq!(check_estimate(&z, &f, &wf, 0.0).unwrap().status, CheckStatus::Skipped);
    }

    #[test]
    fn comparison_p2_and_hypothesis_gate() {
        let mesh = Arc::new(Mesh::unit_square(8).unwrap());
        let f = CoefficientField::p_laplacian(2.0, 0.0);
        let (s, o) = (Schedule::default(), SolverOptions::default());
        let mu1 = MeasureData::density(DensityExpr::Constant(1.0));
        let mu2 = MeasureData::density(DensityExpr::Constant(2.0));
        let r = check_comparison(&f, &mu1, &mu2, &mesh, &s, &o, 1e-10).unwrap();
        assert!(r.pass && r.margin <= 0.0, "{r}");
        let same = check_comparison(&f, &mu1, &mu1, &mesh, &s, &o, 1e-9).unwrap();
        assert!(same.pass);
        let r = check_comparison(&f, &mu2, &mu1, &mesh, &s, &o, 1e-10).unwrap();
        assert_eq!(r.status, CheckStatus::Skipped);
    }

    #[test]
    fn exponent_windows() {
        let (q, r) = regularity_exponents(1.8, 2, None, Some(1.3)).unwrap();
        assert_eq!(q, 1.3);
        assert!((r - 6.5).abs() < 1e-12);
        assert!(regularity_exponents(1.8, 2, None, Some(2.0)).is_err());
        // (p*)' = 18/17 for p = 1.8, N = 2
        assert!(regularity_exponents(1.8, 2, Some(1.05), None).is_ok());
        assert!(regularity_exponents(1.8, 2, Some(1.9), None).is_err());
        assert!(regularity_exponents(2.0, 2, None, Some(1.3)).is_err());
    }

    #[test]
    fn constant_sequence_has_zero_distance() {
        let mesh = Arc::new(Mesh::unit_square(6).unwrap());
        let f = CoefficientField::p_laplacian(2.0, 0.0);
        let mu = MeasureData::density(DensityExpr::Constant(1.0));
        let t = convergence_study(&f, &mu, &mesh, &[2.0, 4.0], &SolverOptions::default()).unwrap();
        assert!(t.rows.iter().all(|r| r.phi_distance <= 1e-9 && r.data_distance == 0.0));
    }
}

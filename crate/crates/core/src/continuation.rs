//! Continuation along the scaling homotopy from the homogeneous limit problem
//! (`t = 0`) to the target problem (`t = 1`), with blow-up detection and
//! kernel-candidate extraction.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{FeFunction, Mesh};
use crate::linalg::BandMatrix;
use crate::measures::MeasureData;
use crate::report::Provenance;
use crate::solve::{assemble_jacobian, assemble_mass, assemble_residual, assemble_stiffness, solve_with_load, SolverOptions, Strategy};
use crate::structural::{phi_norm, psi_sup, scaling_homotopy, CoefficientField};

/// Lowest `count` Dirichlet eigenpairs of `-Lap` (`K v = lambda M v`) by
/// inverse iteration with M-orthogonal deflation; vectors have `v^T M v = 1`.
pub fn dirichlet_eigenpairs(mesh: &Arc<Mesh<f64>>, count: usize, tol: f64) -> Result<Vec<(f64, FeFunction<f64>)>> {
    let n = mesh.n_dofs();
    if count == 0 || count > n {
        return Err(Error::invalid(format!("cannot compute {count} eigenpairs with {n} dofs")));
    }
    let k = assemble_stiffness(mesh);
    let m = assemble_mass(mesh);
    let lu = k.clone().lu()?;
    let mut found: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xe16e);
    for _ in 0..count {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) + 0.5).collect();
        let mut lambda = f64::INFINITY;
        for _ in 0..5000 {
            let mv = m.mul_vec(&v);
            let mut w = lu.solve(&mv);
            for (_, e) in &found {
                let me = m.mul_vec(e);
                let c: f64 = w.iter().zip(&me).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
            }
            let mw = m.mul_vec(&w);
            let nrm = w.iter().zip(&mw).map(|(a, b)| a * b).sum::<f64>().sqrt();
            w.iter_mut().for_each(|x| *x /= nrm);
            let kw = k.mul_vec(&w);
            let next: f64 = w.iter().zip(&kw).map(|(a, b)| a * b).sum();
            v = w;
            let done = (next - lambda).abs() <= tol * next;
            lambda = next;
            if done {
                break;
            }
        }
        found.push((lambda, v));
    }
    Ok(found.into_iter().map(|(l, v)| (l, FeFunction::from_dofs(mesh, &v))).collect())
}

/// `int |u|^{p-1} + int |grad u|^{p-1}`.
pub fn blowup_tau(u: &FeFunction<f64>, p: f64) -> f64 {
    u.integrate_with(|v, _| v.abs().powf(p - 1.0)) + u.grad_p_integral(p - 1.0)
}

/// `v = u / tau^{1/(p-1)}` for the last iterate, so that `blowup_tau(v) = 1`.
pub fn normalize_blowup(sequence: &[FeFunction<f64>], p: f64) -> Result<FeFunction<f64>> {
    let u = sequence.last().ok_or_else(|| Error::invalid("empty iterate sequence"))?;
    let tau = blowup_tau(u, p);
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("degenerate blow-up normalization (tau = {tau})")));
    }
    Ok(u.scaled(tau.powf(-1.0 / (p - 1.0))))
}

#[derive(Debug, Clone)]
pub struct PathOptions {
    pub initial_step: f64,
    pub max_step: f64,
    pub step_floor: f64,
    /// Phi-norm blow-up threshold; `None` selects ten times the a-priori ceiling.
    pub r_max: Option<f64>,
    pub max_steps: usize,
    pub solver: SolverOptions<f64>,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            initial_step: 0.125,
            max_step: 0.25,
            step_floor: 1e-6,
            r_max: None,
            max_steps: 4000,
            solver: SolverOptions::default(),
        }
    }
}

impl PathOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_floor > 0.0 && self.initial_step >= self.step_floor && self.max_step >= self.initial_step && self.max_step <= 1.0) {
            return Err(Error::invalid("path steps must satisfy 0 < floor <= initial <= max <= 1"));
        }
        if let Some(r) = self.r_max {
            if !(r > 0.0) {
                return Err(Error::invalid("R_max must be positive"));
            }
        }
        self.solver.validate()
    }
}

/// `10 (||psi||_inf |mu| + ||alpha_0||_1) / nu`.
pub fn default_r_max(field: &CoefficientField<f64>, mu: &MeasureData<f64>, mesh: &Mesh<f64>) -> Result<f64> {
    let tv = mu.total_variation(mesh)?.value;
    Ok(10.0 * (psi_sup::<f64>() * tv + field.growth.alpha0_l1(mesh)) / field.nu())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone)]
pub struct PathSample {
    pub t: f64,
    pub phi_norm: f64,
    pub newton_iters: usize,
    pub status: SampleStatus,
}

#[derive(Debug, Clone)]
pub enum PathStatus {
    Reached { u: FeFunction<f64> },
    BlowUp { t_star: f64, candidate: FeFunction<f64>, tau_trace: Vec<f64>, reason: String },
    Stalled { diagnostics: String },
}

impl PathStatus {
    pub fn label(&self) -> &'static str {
        match self {
            PathStatus::Reached { .. } => "reached",
            PathStatus::BlowUp { .. } => "blowup",
            PathStatus::Stalled { .. } => "stalled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathReport {
    pub samples: Vec<PathSample>,
    pub status: PathStatus,
    pub r_max: f64,
}

impl PathReport {
    /// Phi-norm at `t = 1` when the path reached the target.
    pub fn final_phi_norm(&self) -> Option<f64> {
        match self.status {
            PathStatus::Reached { .. } => self.samples.iter().rev().find(|s| s.status == SampleStatus::Accepted).map(|s| s.phi_norm),
            _ => None,
        }
    }

    /// CSV with columns `t,phi_norm,newton_iters,status`; the last row carries the terminal status.
    pub fn write_csv<W: Write>(&self, w: &mut W, prov: &Provenance) -> Result<()> {
        prov.write_comment(w)?;
        writeln!(w, "# r_max={:.12e}", self.r_max)?;
        writeln!(w, "t,phi_norm,newton_iters,status")?;
        for s in &self.samples {
            let st = match s.status {
                SampleStatus::Accepted => "accepted",
                SampleStatus::Rejected => "rejected",
            };
            writeln!(w, "{:.12e},{:.12e},{},{}", s.t, s.phi_norm, s.newton_iters, st)?;
        }
        let last = self.samples.last().map_or(0.0, |s| s.phi_norm);
        let t = match &self.status {
            PathStatus::BlowUp { t_star, .. } => *t_star,
            _ => self.samples.last().map_or(0.0, |s| s.t),
        };
        writeln!(w, "{:.12e},{:.12e},0,{}", t, last, self.status.label())?;
        Ok(())
    }
}

/// Runs `t: 0 -> 1` on `-div a_t(x, grad u) + b_t(x, u, grad u) = t mu` with warm starts.
pub fn run_fredholm_path(
    field: &CoefficientField<f64>,
    mu: &MeasureData<f64>,
    mesh: &Arc<Mesh<f64>>,
    opts: &PathOptions,
) -> Result<PathReport> {
    opts.validate()?;
    if field.asymptotics.is_none() {
        return Err(Error::MissingAsymptotics);
    }
    let p = field.p();
    let r_max = match opts.r_max {
        Some(r) => r,
        None => default_r_max(field, mu, mesh)?,
    };
    let load = mu.discretize_load(mesh)?;
    let mut samples = Vec::new();
    let mut u = FeFunction::zeros(mesh);
    let mut history: Vec<FeFunction<f64>> = vec![u.clone()];
    let mut t = 0.0f64;
    let mut dt = opts.initial_step;
    let mut one_shot = 0usize;

    // t = 0: u = 0 solves the homogeneous limit problem
    let f0 = scaling_homotopy(field, 0.0)?;
    let r0 = assemble_residual(&f0, &vec![0.0; mesh.n_nodes()], &u)?;
    samples.push(PathSample { t: 0.0, phi_norm: 0.0, newton_iters: 0, status: SampleStatus::Accepted });
    let r0 = r0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r0 > 1e-12 {
        return Ok(PathReport {
            samples,
            status: PathStatus::Stalled { diagnostics: format!("u = 0 does not solve the limit problem (residual {r0:.3e})") },
            r_max,
        });
    }

    let blowup = |samples: Vec<PathSample>, t_star: f64, seq: &[FeFunction<f64>], reason: String| -> Result<PathReport> {
        let candidate = normalize_blowup(seq, p)?;
        let tau_trace = seq.iter().rev().take(8).rev().map(|x| blowup_tau(x, p)).collect();
        Ok(PathReport { samples, status: PathStatus::BlowUp { t_star, candidate, tau_trace, reason }, r_max })
    };

    for _ in 0..opts.max_steps {
        if t >= 1.0 {
            return Ok(PathReport { samples, status: PathStatus::Reached { u }, r_max });
        }
        let t_next = (t + dt).min(1.0);
        let ft = scaling_homotopy(field, t_next)?;
        let lt: Vec<f64> = load.iter().map(|l| l * t_next).collect();
        match solve_with_load(&ft, &lt, mesh, &opts.solver, Some(&u)) {
            Ok((un, stats)) => {
                let pn = phi_norm(&un, p);
                samples.push(PathSample { t: t_next, phi_norm: pn, newton_iters: stats.iterations, status: SampleStatus::Accepted });
                history.push(un.clone());
                if !(pn <= r_max) {
                    return blowup(samples, t_next, &history, format!("phi_norm {pn:.6e} exceeds R_max {r_max:.6e}"));
                }
                u = un;
                t = t_next;
                if stats.strategy == Strategy::Newton {
                    one_shot += 1;
                    if one_shot >= 2 {
                        dt = (dt * 2.0).min(opts.max_step);
                        one_shot = 0;
                    }
                } else {
                    one_shot = 0;
                }
            }
            Err(e @ (Error::NonConvergence { .. } | Error::SingularJacobian { .. })) => {
                let iterations = if let Error::NonConvergence { iterations, .. } = e { iterations } else { 0 };
                // the undamped Newton step from the warm start is the diverging iterate
                let cand = undamped_step(&ft, &lt, &u);
                let pn = cand.as_ref().map_or(f64::NAN, |c| phi_norm(c, p));
                samples.push(PathSample { t: t_next, phi_norm: pn, newton_iters: iterations, status: SampleStatus::Rejected });
                if pn > r_max {
                    history.push(cand.unwrap());
                    return blowup(samples, t_next, &history, format!("diverging Newton iterate at t = {t_next:.6e} (phi_norm {pn:.6e})"));
                }
                one_shot = 0;
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
        if dt < opts.step_floor {
            let reason = format!("step below floor {:.1e} at t = {t:.6e}", opts.step_floor);
            if blowup_tau(&u, p) > 0.0 {
                return blowup(samples, t, &history, reason);
            }
            return Ok(PathReport { samples, status: PathStatus::Stalled { diagnostics: format!("{reason}; no nonzero iterate to normalize") }, r_max });
        }
    }
    if t >= 1.0 {
        return Ok(PathReport { samples, status: PathStatus::Reached { u }, r_max });
    }
    Ok(PathReport {
        samples,
        status: PathStatus::Stalled { diagnostics: format!("step budget {} exhausted at t = {t:.6e}", opts.max_steps) },
        r_max,
    })
}

fn undamped_step(field: &CoefficientField<f64>, load: &[f64], u: &FeFunction<f64>) -> Option<FeFunction<f64>> {
    let r = assemble_residual(field, load, u).ok()?;
    let lu = assemble_jacobian(field, u).ok()?.lu().ok()?;
    let d = lu.solve(&r);
    let next: Vec<f64> = u.dofs().iter().zip(&d).map(|(a, b)| a - b).collect();
    next.iter().all(|v| v.is_finite()).then(|| FeFunction::from_dofs(u.mesh(), &next))
}

#[derive(Debug, Clone)]
pub struct KernelAttempt {
    pub start: usize,
    pub converged: bool,
    /// Multiplier of the normalization constraint at the end of the attempt.
    pub sigma: f64,
    /// Residual of the limit problem itself.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct KernelSearch {
    pub candidate: Option<FeFunction<f64>>,
    pub attempts: Vec<KernelAttempt>,
}

/// `G_i = int |v|^{p-2} v phi_i` and its Jacobian.
fn power_mass(v: &FeFunction<f64>, p: f64, with_jacobian: bool) -> (Vec<f64>, Option<BandMatrix<f64>>) {
    let mesh = v.mesh();
    let vals = v.values();
    let mut g = vec![0.0; mesh.n_dofs()];
    let mut j = with_jacobian.then(|| BandMatrix::symmetric_band(mesh.n_dofs(), mesh.dof_bandwidth()));
    for c in mesh.cells() {
        let nodes = c.local_nodes();
        for q in c.quad() {
            let s = c.value_at(q, vals);
            let a = s.abs();
            let val = if a > 0.0 { a.powf(p - 2.0) * s } else { 0.0 };
            let der = if a > 0.0 { (p - 1.0) * a.powf(p - 2.0) } else if p == 2.0 { 1.0 } else { 0.0 };
            for (k, &nk) in nodes.iter().enumerate() {
                let Some(i) = mesh.dof(nk) else { continue };
                g[i] += q.weight * val * q.shape[k];
                if let Some(j) = j.as_mut() {
                    for (l, &nl) in nodes.iter().enumerate() {
                        if let Some(jj) = mesh.dof(nl) {
                            j.add(i, jj, q.weight * der * q.shape[k] * q.shape[l]);
                        }
                    }
                }
            }
        }
    }
    (g, j)
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Multistart search for a nontrivial solution of
/// `-div a_inf(x, grad v) + b_inf(x, v, grad v) = 0`, normalized so that
/// `int |v|^{p-1} + |grad v|^{p-1} = 1`. Meant for coarse meshes (dense bordered solves).
pub fn solve_limit_kernel(field: &CoefficientField<f64>, mesh: &Arc<Mesh<f64>>, attempts: usize, seed: u64, tol: f64) -> Result<KernelSearch> {
    let limit = scaling_homotopy(field, 0.0)?;
    let p = field.p();
    let n = mesh.n_dofs();
    let zero_load = vec![0.0; mesh.n_nodes()];
    let k = assemble_stiffness(mesh);
    let m = assemble_mass(mesh);
    let klu = k.lu()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diags = Vec::new();
    for start in 0..attempts {
        // smooth start: one inverse-Laplacian step applied to random data
        let positive = start % 2 == 0;
        let raw: Vec<f64> = (0..n).map(|_| if positive { rng.gen_range(0.0..1.0) } else { rng.gen_range(-1.0..1.0) }).collect();
        let mut v = klu.solve(&m.mul_vec(&raw));
        let scale = (p * 0.0 + 1.0) / (power_mass(&FeFunction::from_dofs(mesh, &v), p, false).0.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / p).powf(1.0 / p);
        v.iter_mut().for_each(|x| *x *= scale);
        let u0 = FeFunction::from_dofs(mesh, &v);
        let f0 = assemble_residual(&limit, &zero_load, &u0)?;
        let (g0, _) = power_mass(&u0, p, false);
        let mut sigma = dotv(&f0, &v) / dotv(&g0, &v);
        let mut converged = false;
        for _ in 0..60 {
            let u = FeFunction::from_dofs(mesh, &v);
            let f = assemble_residual(&limit, &zero_load, &u)?;
            let (g, jg) = power_mass(&u, p, true);
            let c = dotv(&g, &v) / p - 1.0;
            let res: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a - sigma * b).collect();
            let rn = res.iter().fold(c.abs(), |acc, x| acc.max(x.abs()));
            if rn <= tol * 1e-2 {
                converged = true;
                break;
            }
            let ja = assemble_jacobian(&limit, &u)?;
            let jg = jg.unwrap();
            let mut big = BandMatrix::dense(n + 1);
            let (kl, ku) = ja.bandwidths();
            for i in 0..n {
                for jj in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                    big.set(i, jj, ja.get(i, jj) - sigma * jg.get(i, jj));
                }
                big.set(i, n, -g[i]);
                big.set(n, i, g[i]);
            }
            let Ok(lu) = big.lu() else { break };
            let mut rhs: Vec<f64> = res.iter().map(|x| -x).collect();
            rhs.push(-c);
            let d = lu.solve(&rhs);
            if d.iter().any(|x| !x.is_finite()) {
                break;
            }
            v.iter_mut().zip(&d).for_each(|(x, dx)| *x += dx);
            sigma += d[n];
        }
        let u = FeFunction::from_dofs(mesh, &v);
        let f = assemble_residual(&limit, &zero_load, &u)?;
        let plain = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let ok = converged && plain <= tol;
        diags.push(KernelAttempt { start, converged, sigma, residual: plain });
        if ok {
            let cand = normalize_blowup(&[u], p)?;
            return Ok(KernelSearch { candidate: Some(cand), attempts: diags });
        }
    }
    Ok(KernelSearch { candidate: None, attempts: diags })
}

/// `|<v, e>_M| / (||v||_M ||e||_M)`.
pub fn mass_alignment(v: &FeFunction<f64>, e: &FeFunction<f64>) -> Result<f64> {
    v.check_same_mesh(e)?;
    let m = assemble_mass(v.mesh());
    let (a, b) = (v.dofs(), e.dofs());
    let (ma, mb) = (m.mul_vec(&a), m.mul_vec(&b));
    Ok(dotv(&a, &mb).abs() / (dotv(&a, &ma).sqrt() * dotv(&b, &mb).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DensityExpr;
    use nalgebra::DMatrix;

    fn square(n: usize) -> Arc<Mesh<f64>> {
        Arc::new(Mesh::unit_square(n).unwrap())
    }

    #[test]
    fn eigenvalues_match_dense_oracle() {
        let mesh = square(6);
        let k = assemble_stiffness(&mesh).to_dense();
        let m = assemble_mass(&mesh).to_dense();
        let n = mesh.n_dofs();
        let km = DMatrix::from_fn(n, n, |i, j| k[i][j]);
        let mm = DMatrix::from_fn(n, n, |i, j| m[i][j]);
        // M^{-1/2} K M^{-1/2} via Cholesky
        let l = mm.cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        let a = &li * km * li.transpose();
        let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pairs = dirichlet_eigenpairs(&mesh, 2, 1e-13).unwrap();
        assert!((pairs[0].0 - ev[0]).abs() < 1e-9 * ev[0]);
        assert!((pairs[1].0 - ev[1]).abs() < 1e-6 * ev[1]);
    }

    #[test]
    fn first_eigenvalue_extrapolates_to_two_pi_squared() {
        let l: Vec<f64> = [8, 16, 32].iter().map(|&n| dirichlet_eigenpairs(&square(n), 1, 1e-12).unwrap()[0].0).collect();
        // O(h^2) Richardson
        let extrap = (4.0 * l[2] - l[1]) / 3.0;
        let exact = 2.0 * std::f64::consts::PI.powi(2);
        assert!((extrap - exact).abs() < 1e-2 * exact, "{extrap}");
        assert!(l[0] > l[1] && l[1] > l[2] && l[2] > exact);
    }

    #[test]
    fn normalization_properties() {
        let mesh = square(8);
        let u = FeFunction::interpolate_zero_bc(&mesh, |x| (3.0 * x[0]).sin() * x[1] * (1.0 - x[0]));
        for p in [1.5, 2.0, 3.0] {
            let v = normalize_blowup(&[u.clone()], p).unwrap();
            assert!((blowup_tau(&v, p) - 1.0).abs() < 1e-8);
            let w = normalize_blowup(&[u.scaled(37.0)], p).unwrap();
            assert!(v.sup_distance(&w).unwrap() < 1e-12);
            let again = normalize_blowup(&[v.clone()], p).unwrap();
            assert!(v.sup_distance(&again).unwrap() < 1e-12);
        }
        assert!(normalize_blowup(&[FeFunction::zeros(&mesh)], 2.0).is_err());
        assert!(normalize_blowup(&[], 2.0).is_err());
    }

    #[test]
    fn coercive_path_reaches_target() {
        let mesh = square(6);
        let field = CoefficientField::p_laplacian(1.5, 1e-6);
        let mu = MeasureData::density(DensityExpr::Constant(1.0));
        let rep = run_fredholm_path(&field, &mu, &mesh, &PathOptions::default()).unwrap();
        assert!(matches!(rep.status, PathStatus::Reached { .. }));
        assert!(rep.samples.iter().all(|s| s.status == SampleStatus::Rejected || s.phi_norm <= rep.r_max));
        let mut out = Vec::new();
        rep.write_csv(&mut out, &Provenance::new("abc")).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# entropic"));
        assert!(text.trim_end().ends_with("reached"));
    }

    #[test]
    fn limit_kernel_at_first_eigenvalue() {
        let mesh = square(6);
        let (l1, e1) = dirichlet_eigenpairs(&mesh, 1, 1e-14).unwrap().remove(0);
        let at = CoefficientField::p_laplacian(2.0, 0.0).with_power_reaction(l1);
        let s = solve_limit_kernel(&at, &mesh, 32, 7, 1e-8).unwrap();
        let v = s.candidate.expect("kernel at lambda_1");
        assert!(mass_alignment(&v, &e1).unwrap() > 0.999);
        assert!((blowup_tau(&v, 2.0) - 1.0).abs() < 1e-8);

        let below = CoefficientField::p_laplacian(2.0, 0.0).with_power_reaction(0.5 * l1);
        let s = solve_limit_kernel(&below, &mesh, 32, 7, 1e-8).unwrap();
        assert!(s.candidate.is_none());
        assert_eq!(s.attempts.len(), 32);

        let none = CoefficientField::p_laplacian(2.0, 0.0);
        assert!(solve_limit_kernel(&none, &mesh, 8, 7, 1e-8).unwrap().candidate.is_none());
    }
}

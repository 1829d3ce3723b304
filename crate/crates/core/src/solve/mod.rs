//! Discrete solver for the truncated problems and the approximation driver
//! producing entropy solutions.

pub mod assembly;

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{FeFunction, Mesh};
use crate::measures::MeasureData;
use crate::report::Provenance;
use crate::scalar::{dot, Real};
use crate::structural::{phi_metric, phi_norm, psi, psi_prime, psi_sup, truncation_homotopy, CoefficientField};

pub use assembly::{assemble_jacobian, assemble_mass, assemble_residual, assemble_stiffness};
use assembly::{jacobian_with, kacanov_matrix, residual_with, source_vector, Stabilization};

#[derive(Debug, Clone)]
pub struct SolverOptions<T> {
    /// Termination threshold on `max_i |R_i|`.
    pub newton_tol: T,
    /// Newton iteration budget per phase.
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: T,
    /// Smallest damping factor tried before giving up on a Newton direction.
    pub min_damping: T,
    /// Stabilization levels `eps` (flux `a + eps xi`) swept downwards when plain
    /// Newton fails; the final solve is always unstabilized.
    pub eps_schedule: Vec<T>,
    /// Frozen-coefficient iterations tried before the sweep.
    pub kacanov_steps: usize,
    /// Relative residual accepted from the direct linear solve.
    pub linear_tol: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            newton_tol: T::lit(1e-10),
            max_iter: 60,
            armijo: T::lit(1e-4),
            min_damping: T::lit(1.0 / 1024.0),
            eps_schedule: [1.0, 0.3, 0.1, 3e-2, 1e-2, 3e-3, 1e-3, 1e-4, 1e-5].iter().map(|&v| T::lit(v)).collect(),
            kacanov_steps: 20,
            linear_tol: T::lit(1e-8),
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > T::zero() && self.linear_tol > T::zero()) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be >= 1"));
        }
        if !(self.armijo > T::zero() && self.armijo < T::one()) || !(self.min_damping > T::zero() && self.min_damping <= T::one()) {
            return Err(Error::invalid("damping parameters must lie in (0, 1)"));
        }
        if self.eps_schedule.iter().any(|&e| !(e >= T::zero())) {
            return Err(Error::invalid("eps_schedule entries must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Newton,
    Kacanov,
    Sweep,
}

#[derive(Debug, Clone)]
pub struct SolveStats<T> {
    pub iterations: usize,
    pub residual: T,
    pub damping: Vec<T>,
    pub strategy: Strategy,
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

fn two_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

enum Failure {
    Budget,
    LineSearch,
    Singular,
}

struct Phase<T> {
    u: FeFunction<T>,
    residual: T,
    failure: Option<Failure>,
}

struct Newton<'a, T: Real> {
    field: &'a CoefficientField<T>,
    load: &'a [T],
    opts: &'a SolverOptions<T>,
    iterations: usize,
    damping: Vec<T>,
    best: Option<(T, FeFunction<T>)>,
}

impl<'a, T: Real> Newton<'a, T> {
    fn note_best(&mut self, r: T, u: &FeFunction<T>) {
        if self.best.as_ref().map_or(true, |(b, _)| r < *b) {
            self.best = Some((r, u.clone()));
        }
    }

    fn run(&mut self, mut u: FeFunction<T>, st: Stabilization<T>, tol: T) -> Result<Phase<T>> {
        let mesh = Arc::clone(u.mesh());
        let mut r = residual_with(self.field, self.load, &u, st)?;
        let mut nr = inf_norm(&r);
        if st.stab == T::zero() {
            self.note_best(nr, &u);
        }
        for _ in 0..self.opts.max_iter {
            if nr <= tol {
                return Ok(Phase { u, residual: nr, failure: None });
            }
            let lu = match jacobian_with(self.field, &u, st)?.lu() {
                Ok(lu) => lu,
                Err(_) => return Ok(Phase { u, residual: nr, failure: Some(Failure::Singular) }),
            };
            let rhs: Vec<T> = r.iter().map(|&v| -v).collect();
            let delta = lu.solve(&rhs);
            if delta.iter().any(|d| !d.is_finite()) {
                return Ok(Phase { u, residual: nr, failure: Some(Failure::Singular) });
            }
            self.iterations += 1;
            let merit = two_norm(&r);
            let base = u.dofs();
            let mut lambda = T::one();
            let accepted = loop {
                let trial: Vec<T> = base.iter().zip(&delta).map(|(&a, &d)| a + lambda * d).collect();
                let ut = FeFunction::from_dofs(&mesh, &trial);
                if let Ok(rt) = residual_with(self.field, self.load, &ut, st) {
                    let m = two_norm(&rt);
                    if m.is_finite() && (m <= (T::one() - self.opts.armijo * lambda) * merit || inf_norm(&rt) <= tol) {
                        break Some((ut, rt));
                    }
                }
                lambda = lambda * T::lit(0.5);
                if lambda < self.opts.min_damping {
                    break None;
                }
            };
            self.damping.push(lambda);
            match accepted {
                Some((ut, rt)) => {
                    u = ut;
                    r = rt;
                    nr = inf_norm(&r);
                    if st.stab == T::zero() {
                        self.note_best(nr, &u);
                    }
                }
                None => return Ok(Phase { u, residual: nr, failure: Some(Failure::LineSearch) }),
            }
        }
        let failure = if nr <= tol { None } else { Some(Failure::Budget) };
        Ok(Phase { u, residual: nr, failure })
    }

    /// Frozen-coefficient iterations with the lower-order term lagged.
    fn kacanov(&mut self, mut u: FeFunction<T>, st: Stabilization<T>, steps: usize) -> Result<FeFunction<T>> {
        let mesh = Arc::clone(u.mesh());
        let l: Vec<T> = mesh.free_nodes().iter().map(|&n| self.load[n]).collect();
        for _ in 0..steps {
            let Ok(lu) = kacanov_matrix(self.field, &u, st)?.lu() else { break };
            let b = source_vector(self.field, &u);
            let rhs: Vec<T> = l.iter().zip(&b).map(|(&a, &c)| a - c).collect();
            let next = lu.solve(&rhs);
            if next.iter().any(|v| !v.is_finite()) {
                break;
            }
            self.iterations += 1;
            u = FeFunction::from_dofs(&mesh, &next);
        }
        Ok(u)
    }
}

fn solve_load<T: Real>(
    field: &CoefficientField<T>,
    load: &[T],
    mesh: &Arc<Mesh<T>>,
    opts: &SolverOptions<T>,
    guess: Option<&FeFunction<T>>,
) -> Result<(FeFunction<T>, SolveStats<T>)> {
    opts.validate()?;
    let u0 = match guess {
        Some(g) if Arc::ptr_eq(g.mesh(), mesh) => g.clone(),
        Some(_) => return Err(Error::MeshMismatch),
        None => FeFunction::zeros(mesh),
    };
    let tol = opts.newton_tol;
    let mut nw = Newton { field, load, opts, iterations: 0, damping: Vec::new(), best: None };
    let zero = Stabilization::default();
    let finish = |nw: &Newton<T>, ph: Phase<T>, strategy| {
        let stats = SolveStats { iterations: nw.iterations, residual: ph.residual, damping: nw.damping.clone(), strategy };
        (ph.u, stats)
    };

    let ph = nw.run(u0.clone(), zero, tol)?;
    if ph.failure.is_none() {
        return Ok(finish(&nw, ph, Strategy::Newton));
    }
    let mut singular = matches!(ph.failure, Some(Failure::Singular));

    if opts.kacanov_steps > 0 {
        let start = nw.best.as_ref().map(|(_, b)| b.clone()).unwrap_or_else(|| u0.clone());
        let k = nw.kacanov(start, zero, opts.kacanov_steps)?;
        let ph = nw.run(k, zero, tol)?;
        if ph.failure.is_none() {
            return Ok(finish(&nw, ph, Strategy::Kacanov));
        }
        singular &= matches!(ph.failure, Some(Failure::Singular));
    }

    if !opts.eps_schedule.is_empty() {
        let mut u = u0.clone();
        for &eps in &opts.eps_schedule {
            let st = Stabilization { stab: eps };
            let ph = nw.run(u.clone(), st, tol)?;
            u = if ph.failure.is_none() { ph.u } else { nw.kacanov(ph.u, st, opts.kacanov_steps)? };
        }
        let ph = nw.run(u, zero, tol)?;
        if ph.failure.is_none() {
            return Ok(finish(&nw, ph, Strategy::Sweep));
        }
        singular &= matches!(ph.failure, Some(Failure::Singular));
    }

    if singular {
        return Err(Error::SingularJacobian { damping: nw.damping.iter().map(|d| d.as_f64()).collect() });
    }
    let (residual, best) = nw.best.map(|(r, b)| (r.as_f64(), b.dofs().iter().map(|v| v.as_f64()).collect())).unwrap_or((f64::INFINITY, Vec::new()));
    Err(Error::NonConvergence { iterations: nw.iterations, residual, best })
}

/// Solves `-div a(x, grad u) + T_{1/tau}(b(x, u, grad u)) = mu` for a density `mu`.
pub fn solve_truncated<T: Real>(
    field: &CoefficientField<T>,
    mu: &MeasureData<T>,
    mesh: &Arc<Mesh<T>>,
    tau: T,
    opts: &SolverOptions<T>,
    guess: Option<&FeFunction<T>>,
) -> Result<(FeFunction<T>, SolveStats<T>)> {
    if !matches!(mu, MeasureData::Density(_)) {
        return Err(Error::invalid("solve_truncated needs a density right-hand side (mollify first)"));
    }
    let load = mu.discretize_load(mesh)?;
    let f = if field.has_lower_order_term() { truncation_homotopy(field, tau)? } else { field.clone() };
    solve_load(&f, &load, mesh, opts, guess)
}

/// Solves `-div a(x, grad u) + b(x, u, grad u) = mu` with the load of `mu` used directly.
pub fn solve_direct<T: Real>(
    field: &CoefficientField<T>,
    mu: &MeasureData<T>,
    mesh: &Arc<Mesh<T>>,
    opts: &SolverOptions<T>,
    guess: Option<&FeFunction<T>>,
) -> Result<(FeFunction<T>, SolveStats<T>)> {
    let load = mu.discretize_load(mesh)?;
    solve_load(field, &load, mesh, opts, guess)
}

/// Solves with an explicit nodal load vector.
pub fn solve_with_load<T: Real>(
    field: &CoefficientField<T>,
    load: &[T],
    mesh: &Arc<Mesh<T>>,
    opts: &SolverOptions<T>,
    guess: Option<&FeFunction<T>>,
) -> Result<(FeFunction<T>, SolveStats<T>)> {
    if load.len() != mesh.n_nodes() {
        return Err(Error::invalid("load vector length differs from node count"));
    }
    solve_load(field, load, mesh, opts, guess)
}

/// Truncation/mollification schedule `tau_n = 2^-n`, level `level0 * 2^n`.
#[derive(Debug, Clone)]
pub struct Schedule<T> {
    pub n_max: usize,
    pub level0: T,
    /// Acceptance threshold on consecutive Phi-distances.
    pub tol: T,
}

impl<T: Real> Default for Schedule<T> {
    fn default() -> Self {
        Schedule { n_max: 12, level0: T::one(), tol: T::lit(1e-4) }
    }
}

impl<T: Real> Schedule<T> {
    pub fn tau(&self, n: usize) -> T {
        T::lit(2f64.powi(-(n as i32)))
    }

    pub fn level(&self, n: usize) -> T {
        self.level0 * T::lit(2f64.powi(n as i32))
    }
}

#[derive(Debug, Clone)]
pub struct ScheduleStep<T> {
    pub n: usize,
    pub tau: T,
    pub level: T,
    pub newton_iters: usize,
    pub residual: T,
    pub distance: Option<T>,
}

#[derive(Debug, Clone)]
pub struct EntropySolution<T> {
    pub u: FeFunction<T>,
    pub p: T,
    pub nu: T,
    /// `int |grad phi_p(u)|^p`.
    pub phi_norm: T,
    pub trace: Vec<ScheduleStep<T>>,
    /// Right side of the a-priori estimate, `||psi||_inf |mu| + ||alpha_0||_1`.
    pub estimate_bound: T,
    /// `estimate_bound - nu * phi_norm`.
    pub estimate_slack: T,
    /// False when `|mu|` was replaced by an upper bound.
    pub total_variation_exact: bool,
    pub energy_residual: T,
    /// Filled by the verification module; `(test label, k, residual)`.
    pub entropy_residuals: Vec<(String, T, T)>,
}

/// Drives `solve_truncated` over the schedule with warm starts until the
/// Phi-distance between consecutive iterates drops below `schedule.tol`.
pub fn solve_entropy<T: Real>(
    field: &CoefficientField<T>,
    mu: &MeasureData<T>,
    mesh: &Arc<Mesh<T>>,
    schedule: &Schedule<T>,
    opts: &SolverOptions<T>,
) -> Result<EntropySolution<T>> {
    solve_entropy_from(field, mu, mesh, schedule, opts, None)
}

pub fn solve_entropy_from<T: Real>(
    field: &CoefficientField<T>,
    mu: &MeasureData<T>,
    mesh: &Arc<Mesh<T>>,
    schedule: &Schedule<T>,
    opts: &SolverOptions<T>,
    guess: Option<&FeFunction<T>>,
) -> Result<EntropySolution<T>> {
    let p = field.p();
    // bounded densities need no mollification
    let bounded = mu.is_bounded_density();
    let mut prev: Option<FeFunction<T>> = guess.cloned();
    let mut trace = Vec::new();
    let mut distances = Vec::new();
    for n in 0..=schedule.n_max {
        let (tau, level) = (schedule.tau(n), schedule.level(n));
        let mu_n = if bounded { mu.clone() } else { mu.mollify(level)? };
        let (u, stats) = solve_truncated(field, &mu_n, mesh, tau, opts, prev.as_ref())?;
        let distance = match (&prev, n) {
            (Some(v), k) if k > 0 || guess.is_none() => {
                if k == 0 {
                    None
                } else {
                    Some(phi_metric(v, &u, p)?)
                }
            }
            _ => None,
        };
        trace.push(ScheduleStep { n, tau, level, newton_iters: stats.iterations, residual: stats.residual, distance });
        prev = Some(u);
        if let Some(d) = distance {
            distances.push(d.as_f64());
            if d <= schedule.tol {
                return finish_entropy(field, mu, prev.unwrap(), trace);
            }
        }
    }
    Err(Error::ScheduleExhausted { distances })
}

fn finish_entropy<T: Real>(
    field: &CoefficientField<T>,
    mu: &MeasureData<T>,
    u: FeFunction<T>,
    trace: Vec<ScheduleStep<T>>,
) -> Result<EntropySolution<T>> {
    let p = field.p();
    let mesh = Arc::clone(u.mesh());
    let tv = mu.total_variation(&mesh)?;
    let bound = psi_sup::<T>() * tv.value + field.growth.alpha0_l1(&mesh);
    let pn = phi_norm(&u, p);
    let energy = energy_identity_residual(&u, field, mu)?;
    Ok(EntropySolution {
        p,
        nu: field.nu(),
        phi_norm: pn,
        trace,
        estimate_bound: bound,
        estimate_slack: bound - field.nu() * pn,
        total_variation_exact: tv.exact,
        energy_residual: energy.relative,
        entropy_residuals: Vec::new(),
        u,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EnergyIdentity<T> {
    /// `int psi'(u) a(x, grad u) . grad u + int b psi(u)`.
    pub lhs: T,
    /// `<mu, I psi(u)>`.
    pub rhs: T,
    pub relative: T,
}

/// Both sides of the energy identity with `psi(u)` interpolated nodally.
pub fn energy_identity<T: Real>(u: &FeFunction<T>, field: &CoefficientField<T>, mu: &MeasureData<T>) -> Result<EnergyIdentity<T>> {
    let mesh = u.mesh();
    let values = u.values();
    let has_b = field.has_lower_order_term();
    let mut lhs = T::zero();
    for c in mesh.cells() {
        let xi = c.gradient(values);
        for q in c.quad() {
            let s = c.value_at(q, values);
            let a = field.a.eval(&q.x, &xi);
            lhs = lhs + q.weight * psi_prime(s) * dot(&a, &xi);
            if has_b {
                lhs = lhs + q.weight * field.b.eval(&q.x, s, &xi) * psi(s);
            }
        }
    }
    let load = mu.discretize_load(mesh)?;
    let rhs: T = load.iter().zip(values).map(|(&l, &v)| l * psi(v)).sum();
    let scale = lhs.abs().max(rhs.abs());
    let relative = if scale == T::zero() { T::zero() } else { (lhs - rhs).abs() / scale };
    Ok(EnergyIdentity { lhs, rhs, relative })
}

/// Relative mismatch `|lhs - rhs| / max(|lhs|, |rhs|)` of the energy identity.
pub fn energy_identity_residual<T: Real>(u: &FeFunction<T>, field: &CoefficientField<T>, mu: &MeasureData<T>) -> Result<EnergyIdentity<T>> {
    energy_identity(u, field, mu)
}

impl<T: Real> EntropySolution<T> {
    /// Structured-text run report.
    pub fn write_report<W: Write>(&self, w: &mut W, prov: &Provenance) -> Result<()> {
        prov.write_block(w, "run")?;
        writeln!(w, "n_nodes = {}", self.u.mesh().n_nodes())?;
        writeln!(w, "p = {}", self.p)?;
        writeln!(w)?;
        writeln!(w, "[schedule]")?;
        writeln!(w, "# n tau level newton_iters residual distance")?;
        for s in &self.trace {
            let d = s.distance.map_or("-".to_string(), |d| format!("{:.6e}", d.as_f64()));
            writeln!(
                w,
                "{} {:.6e} {:.6e} {} {:.3e} {}",
                s.n,
                s.tau.as_f64(),
                s.level.as_f64(),
                s.newton_iters,
                s.residual.as_f64(),
                d
            )?;
        }
        writeln!(w)?;
        writeln!(w, "[certificates]")?;
        writeln!(w, "phi_norm = {:.12e}", self.phi_norm.as_f64())?;
        writeln!(w, "estimate_bound = {:.12e}", self.estimate_bound.as_f64())?;
        writeln!(w, "estimate_slack = {:.12e}", self.estimate_slack.as_f64())?;
        writeln!(w, "total_variation_exact = {}", self.total_variation_exact)?;
        writeln!(w, "energy_residual = {:.6e}", self.energy_residual.as_f64())?;
        for (label, k, r) in &self.entropy_residuals {
            writeln!(w, "entropy_residual {label} k={:.3e} = {:.6e}", k.as_f64(), r.as_f64())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DensityExpr;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_data_needs_no_iterations() {
        let mesh = Arc::new(Mesh::<f64>::unit_square(4).unwrap());
        let field = CoefficientField::p_laplacian(1.5, 1e-6);
        let (u, st) = solve_truncated(&field, &MeasureData::zero(), &mesh, 1.0, &SolverOptions::default(), None).unwrap();
        assert_eq!(st.iterations, 0);
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn poisson_on_disk() {
        // -Lap u = 4 on the unit disk: u = 1 - r^2
        let mesh = Arc::new(Mesh::<f64>::radial(2, 1.0, 64).unwrap());
        let field = CoefficientField::p_laplacian(2.0, 0.0);
        let mu = MeasureData::density(DensityExpr::Constant(4.0));
        let (u, st) = solve_truncated(&field, &mu, &mesh, 1.0, &SolverOptions::default(), None).unwrap();
        assert!(st.residual <= 1e-10);
        assert_abs_diff_eq!(u.values()[0], 1.0, epsilon = 2e-2);
    }

    #[test]
    fn residual_small_at_solution_and_deterministic() {
        let mesh = Arc::new(Mesh::<f64>::unit_square(8).unwrap());
        let field = CoefficientField::p_laplacian(1.5, 1e-6);
        let mu = MeasureData::density(DensityExpr::Constant(1.0));
        let opts = SolverOptions::default();
        let (u, _) = solve_truncated(&field, &mu, &mesh, 1.0, &opts, None).unwrap();
        let load = mu.discretize_load(&mesh).unwrap();
        assert!(inf_norm(&assemble_residual(&field, &load, &u).unwrap()) <= opts.newton_tol);
        let (v, _) = solve_truncated(&field, &mu, &mesh, 1.0, &opts, None).unwrap();
        assert_eq!(u.values(), v.values());
    }

    #[test]
    fn p_greater_than_two_and_reaction() {
        let mesh = Arc::new(Mesh::<f64>::unit_square(6).unwrap());
        let field = CoefficientField::p_laplacian(3.0, 1e-6);
        let mu = MeasureData::density(DensityExpr::Constant(1.0));
        let (u, _) = solve_truncated(&field, &mu, &mesh, 1.0, &SolverOptions::default(), None).unwrap();
        assert!(u.values().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn bounded_data_accepts_after_one_step() {
        let mesh = Arc::new(Mesh::<f64>::radial(2, 1.0, 16).unwrap());
        let field = CoefficientField::p_laplacian(2.0, 0.0);
        let mu = MeasureData::density(DensityExpr::Constant(1.0));
        let sol = solve_entropy(&field, &mu, &mesh, &Schedule::default(), &SolverOptions::default()).unwrap();
        assert_eq!(sol.trace.len(), 2);
        assert_eq!(sol.trace[1].distance, Some(0.0));
        assert!(sol.estimate_slack >= 0.0);
    }

    #[test]
    fn singular_density_trace_decreases() {
        let mesh = Arc::new(Mesh::<f64>::radial(2, 1.0, 32).unwrap());
        let field = CoefficientField::p_laplacian(2.0, 0.0);
        let mu = MeasureData::density(DensityExpr::RadialPower { exponent: 1.0, center: [0.0, 0.0], coefficient: 1.0 });
        let sol = solve_entropy(&field, &mu, &mesh, &Schedule::default(), &SolverOptions::default()).unwrap();
        let d: Vec<f64> = sol.trace.iter().filter_map(|s| s.distance).collect();
        let ups = d.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(ups <= 1, "{d:?}");
        assert_eq!(*d.last().unwrap(), 0.0);
        assert!(sol.estimate_slack >= -1e-6);
    }

    #[test]
    fn energy_identity_trivial_and_sign() {
        let mesh = Arc::new(Mesh::<f64>::unit_square(4).unwrap());
        let field = CoefficientField::p_laplacian(2.0, 0.0);
        let e = energy_identity(&FeFunction::zeros(&mesh), &field, &MeasureData::zero()).unwrap();
        assert_eq!(e.relative, 0.0);
        let u = FeFunction::interpolate_zero_bc(&mesh, |x| (x[0] - 0.3) * x[1]);
        let e = energy_identity(&u, &field, &MeasureData::zero()).unwrap();
        assert!(e.lhs >= 0.0);
    }

    #[test]
    fn options_are_validated() {
        let mut o = SolverOptions::<f64>::default();
        o.max_iter = 0;
        assert!(o.validate().is_err());
        let mut o = SolverOptions::<f64>::default();
        o.newton_tol = 0.0;
        assert!(o.validate().is_err());
    }
}

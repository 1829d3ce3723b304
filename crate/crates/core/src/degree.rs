//! Brouwer degree of the discretized truncated map on Phi-norm balls and boxes,
//! by multistart Newton enumeration of zeros and Jacobian signs.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{FeFunction, Mesh};
use crate::linalg::BandMatrix;
use crate::measures::MeasureData;
use crate::report::Provenance;
use crate::solve::{assemble_jacobian, assemble_residual};
use crate::structural::{phi_norm, truncation_homotopy, CoefficientField};

/// A `C^1` map `R^n -> R^n`.
pub trait DiscreteMap {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<BandMatrix<f64>>;
    /// `int |grad phi_p(u)|^p` of the field with dofs `x`, when meaningful.
    fn phi_norm(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// Residual map `u -> R(u)` of a coefficient field with a fixed load.
pub struct FieldMap {
    pub field: CoefficientField<f64>,
    pub load: Vec<f64>,
    pub mesh: Arc<Mesh<f64>>,
}

impl DiscreteMap for FieldMap {
    fn dim(&self) -> usize {
        self.mesh.n_dofs()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        assemble_residual(&self.field, &self.load, &FeFunction::from_dofs(&self.mesh, x))
    }

    fn jacobian(&self, x: &[f64]) -> Result<BandMatrix<f64>> {
        assemble_jacobian(&self.field, &FeFunction::from_dofs(&self.mesh, x))
    }

    fn phi_norm(&self, x: &[f64]) -> Option<f64> {
        Some(phi_norm(&FeFunction::from_dofs(&self.mesh, x), self.field.p()))
    }
}

type VecFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type MatFn = dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync;

/// Map given by closures (dense Jacobian).
pub struct FnMap {
    pub dim: usize,
    pub f: Box<VecFn>,
    pub jac: Box<MatFn>,
}

impl DiscreteMap for FnMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x))
    }

    fn jacobian(&self, x: &[f64]) -> Result<BandMatrix<f64>> {
        Ok(BandMatrix::from_dense(&(self.jac)(x)))
    }
}

/// Open region of dof space.
#[derive(Debug, Clone)]
pub enum RegionSpec {
    /// `{u : int |grad phi_p(u)|^p < radius}`.
    PhiBall { radius: f64 },
    /// Coordinate box `lo < x_i < hi`.
    NodalBox { lo: f64, hi: f64 },
    Union(Vec<RegionSpec>),
    /// `base` minus the closure of `hole`.
    Excise { base: Box<RegionSpec>, hole: Box<RegionSpec> },
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegionSpec::PhiBall { radius } if !(*radius > 0.0) => Err(Error::invalid("Phi-ball radius must be positive")),
            RegionSpec::NodalBox { lo, hi } if !(lo < hi) => Err(Error::invalid("degenerate nodal box")),
            RegionSpec::Union(parts) if parts.is_empty() => Err(Error::invalid("empty union")),
            RegionSpec::Union(parts) => parts.iter().try_for_each(|r| r.validate()),
            RegionSpec::Excise { base, hole } => {
                base.validate()?;
                hole.validate()
            }
            _ => Ok(()),
        }
    }

    /// Positive inside, negative outside, near zero on the boundary.
    pub fn margin(&self, map: &dyn DiscreteMap, x: &[f64]) -> Result<f64> {
        Ok(match self {
            RegionSpec::PhiBall { radius } => {
                let pn = map.phi_norm(x).ok_or_else(|| Error::invalid("Phi-ball regions need a mesh-backed map"))?;
                radius - pn
            }
            RegionSpec::NodalBox { lo, hi } => x.iter().map(|&v| (v - lo).min(hi - v)).fold(f64::INFINITY, f64::min),
            RegionSpec::Union(parts) => {
                let mut m = f64::NEG_INFINITY;
                for r in parts {
                    m = m.max(r.margin(map, x)?);
                }
                m
            }
            RegionSpec::Excise { base, hole } => base.margin(map, x)?.min(-hole.margin(map, x)?),
        })
    }

    fn starts(&self, map: &dyn DiscreteMap, count: usize, offset: usize, out: &mut Vec<Vec<f64>>) -> Result<()> {
        let n = map.dim();
        match self {
            RegionSpec::NodalBox { lo, hi } => {
                for i in 0..count {
                    let h = halton(offset + i + 1, n);
                    out.push(h.iter().map(|&v| lo + (hi - lo) * v).collect());
                }
            }
            RegionSpec::PhiBall { radius } => {
                out.push(vec![0.0; n]);
                for i in 1..count {
                    let h = halton(offset + i, n);
                    let d: Vec<f64> = h.iter().map(|&v| 2.0 * v - 1.0).collect();
                    let dn = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if dn == 0.0 {
                        continue;
                    }
                    let frac = ((i % 9) as f64 + 0.5) / 9.0;
                    let target = radius * frac;
                    out.push(scale_to_phi(map, &d, target)?);
                }
            }
            RegionSpec::Union(parts) => {
                let per = count.div_ceil(parts.len());
                for (k, r) in parts.iter().enumerate() {
                    r.starts(map, per, offset + k * per, out)?;
                }
            }
            RegionSpec::Excise { base, .. } => base.starts(map, count, offset, out)?,
        }
        Ok(())
    }
}

/// `s d` with `phi_norm(s d) = target` (bisection in `s`).
fn scale_to_phi(map: &dyn DiscreteMap, d: &[f64], target: f64) -> Result<Vec<f64>> {
    let at = |s: f64| -> Result<f64> {
        let x: Vec<f64> = d.iter().map(|v| v * s).collect();
        map.phi_norm(&x).ok_or_else(|| Error::invalid("Phi-ball regions need a mesh-backed map"))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut k = 0;
    while at(hi)? < target && k < 200 {
        lo = hi;
        hi *= 2.0;
        k += 1;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(d.iter().map(|v| v * lo).collect())
}

/// Point `index` of the Halton sequence in `[0, 1)^dim` (dims cycle through the first primes).
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    (0..dim)
        .map(|k| {
            let b = PRIMES[k % PRIMES.len()];
            // scramble repeated bases by a dimension-dependent shift
            let mut i = index + (k / PRIMES.len()) * 7919;
            let (mut f, mut r) = (1.0, 0.0);
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DegreeOptions {
    pub starts: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub dedup_tol: f64,
    pub boundary_buffer: f64,
    /// Largest dimension reported as certified.
    pub certified_cap: usize,
    /// Smallest accepted `min |u_kk| / max |u_kk|` at a solution.
    pub degeneracy_tol: f64,
    pub max_halvings: usize,
}

impl Default for DegreeOptions {
    fn default() -> Self {
        DegreeOptions {
            starts: 192,
            newton_tol: 1e-10,
            max_newton: 80,
            dedup_tol: 1e-6,
            boundary_buffer: 1e-4,
            certified_cap: 12,
            degeneracy_tol: 1e-12,
            max_halvings: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confidence {
    CertifiedSmallN,
    Heuristic,
}

#[derive(Debug, Clone)]
pub struct DegreeSolution {
    pub x: Vec<f64>,
    pub sign: i32,
}

#[derive(Debug, Clone)]
pub struct DegreeReport {
    pub value: i64,
    pub tau_bar: Option<f64>,
    /// `(tau, value, solution count)` per truncation level tried.
    pub tau_trace: Vec<(f64, i64, usize)>,
    pub solutions: Vec<DegreeSolution>,
    pub confidence: Confidence,
}

fn newton(map: &dyn DiscreteMap, mut x: Vec<f64>, opts: &DegreeOptions) -> Result<Option<Vec<f64>>> {
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let two = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut r = map.eval(&x)?;
    for _ in 0..opts.max_newton {
        if norm(&r) <= opts.newton_tol {
            return Ok(Some(x));
        }
        let Ok(lu) = map.jacobian(&x)?.lu() else { return Ok(None) };
        let d = lu.solve(&r);
        if d.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let merit = two(&r);
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a - lambda * b).collect();
            if let Ok(rt) = map.eval(&trial) {
                if rt.iter().all(|v| v.is_finite()) && (two(&rt) <= (1.0 - 1e-4 * lambda) * merit || norm(&rt) <= opts.newton_tol) {
                    x = trial;
                    r = rt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Ok(None);
            }
        }
    }
    Ok((norm(&r) <= opts.newton_tol).then_some(x))
}

/// Degree of `map` on `region`: enumerate zeros by multistart Newton and sum
/// the signs of the Jacobian determinants.
pub fn brouwer_degree(map: &dyn DiscreteMap, region: &RegionSpec, opts: &DegreeOptions) -> Result<DegreeReport> {
    region.validate()?;
    let mut starts = Vec::new();
    region.starts(map, opts.starts, 0, &mut starts)?;
    let mut sols: Vec<DegreeSolution> = Vec::new();
    let mut last_new = 0usize;
    for (i, s) in starts.into_iter().enumerate() {
        let Some(x) = newton(map, s, opts)? else { continue };
        if sols.iter().any(|z| z.x.iter().zip(&x).all(|(a, b)| (a - b).abs() <= opts.dedup_tol)) {
            continue;
        }
        let m = region.margin(map, &x)?;
        if m.abs() < opts.boundary_buffer {
            return Err(Error::BoundarySolution(format!("zero with region margin {m:.3e} at {x:?}")));
        }
        if m < 0.0 {
            continue;
        }
        let lu = map.jacobian(&x)?.lu().map_err(|_| Error::DegenerateJacobian { det: 0.0 })?;
        if lu.pivot_ratio() < opts.degeneracy_tol {
            return Err(Error::DegenerateJacobian { det: lu.log_abs_det().exp() * lu.det_sign() as f64 });
        }
        last_new = i;
        sols.push(DegreeSolution { x, sign: lu.det_sign() });
    }
    sols.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap_or(std::cmp::Ordering::Equal));
    let value = sols.iter().map(|s| s.sign as i64).sum();
    let saturated = last_new * 2 > opts.starts;
    let confidence = if map.dim() <= opts.certified_cap && !saturated { Confidence::CertifiedSmallN } else { Confidence::Heuristic };
    Ok(DegreeReport { value, tau_bar: None, tau_trace: Vec::new(), solutions: sols, confidence })
}

fn same_solutions(a: &DegreeReport, b: &DegreeReport, tol: f64) -> bool {
    a.value == b.value
        && a.solutions.len() == b.solutions.len()
        && a.solutions.iter().zip(&b.solutions).all(|(x, y)| x.sign == y.sign && x.x.iter().zip(&y.x).all(|(p, q)| (p - q).abs() <= tol))
}

/// Degree of the truncated map `u -> -div a + T_{1/tau}(b) - mu`, with `tau`
/// halved until two consecutive halvings leave solutions and degree unchanged.
pub fn stabilized_degree(
    field: &CoefficientField<f64>,
    mu: &MeasureData<f64>,
    mesh: &Arc<Mesh<f64>>,
    region: &RegionSpec,
    opts: &DegreeOptions,
) -> Result<DegreeReport> {
    let load = mu.discretize_load(mesh)?;
    let mut tau = 1.0;
    let mut history: Vec<(f64, DegreeReport)> = Vec::new();
    for _ in 0..=opts.max_halvings {
        let f = if field.has_lower_order_term() { truncation_homotopy(field, tau)? } else { field.clone() };
        let map = FieldMap { field: f, load: load.clone(), mesh: Arc::clone(mesh) };
        let rep = brouwer_degree(&map, region, opts)?;
        history.push((tau, rep));
        let k = history.len();
        if k >= 3 && same_solutions(&history[k - 3].1, &history[k - 2].1, opts.dedup_tol) && same_solutions(&history[k - 2].1, &history[k - 1].1, opts.dedup_tol) {
            let trace = history.iter().map(|(t, r)| (*t, r.value, r.solutions.len())).collect();
            let (tau_bar, mut rep) = history.swap_remove(k - 3);
            rep.tau_bar = Some(tau_bar);
            rep.tau_trace = trace;
            return Ok(rep);
        }
        tau *= 0.5;
    }
    Err(Error::NoStabilization { halvings: opts.max_halvings })
}

impl DegreeReport {
    pub fn write_report<W: Write>(&self, w: &mut W, prov: &Provenance) -> Result<()> {
        prov.write_block(w, "degree")?;
        writeln!(w, "note = finite-dimensional shadow of the degree")?;
        writeln!(w, "value = {}", self.value)?;
        writeln!(w, "confidence = {}", match self.confidence {
            Confidence::CertifiedSmallN => "certified-small-n",
            Confidence::Heuristic => "heuristic",
        })?;
        match self.tau_bar {
            Some(t) => writeln!(w, "tau_bar = {t:.6e}")?,
            None => writeln!(w, "tau_bar = -")?,
        }
        writeln!(w)?;
        writeln!(w, "[tau_trace]")?;
        writeln!(w, "# tau value n_solutions")?;
        for (t, v, n) in &self.tau_trace {
            writeln!(w, "{t:.6e} {v} {n}")?;
        }
        writeln!(w)?;
        writeln!(w, "[solutions]")?;
        writeln!(w, "# sign_det coordinates")?;
        for s in &self.solutions {
            let coords: Vec<String> = s.x.iter().map(|v| format!("{v:.10e}")).collect();
            writeln!(w, "{:+} {}", s.sign, coords.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::dirichlet_eigenpairs;
    use crate::measures::DensityExpr;

    fn cubic() -> FnMap {
        FnMap { dim: 1, f: Box::new(|x| vec![x[0].powi(3) - x[0]]), jac: Box::new(|x| vec![vec![3.0 * x[0] * x[0] - 1.0]]) }
    }

    #[test]
    fn cubic_has_three_zeros_and_degree_one() {
        let r = brouwer_degree(&cubic(), &RegionSpec::NodalBox { lo: -2.0, hi: 2.0 }, &DegreeOptions::default()).unwrap();
        let xs: Vec<f64> = r.solutions.iter().map(|s| s.x[0]).collect();
        assert_eq!(xs.len(), 3);
        assert!((xs[0] + 1.0).abs() < 1e-10 && xs[1].abs() < 1e-10 && (xs[2] - 1.0).abs() < 1e-10);
        assert_eq!(r.solutions.iter().map(|s| s.sign).collect::<Vec<_>>(), vec![1, -1, 1]);
        assert_eq!(r.value, 1);
        assert_eq!(r.confidence, Confidence::CertifiedSmallN);
    }

    #[test]
    fn additivity_and_excision() {
        let opts = DegreeOptions::default();
        let left = RegionSpec::NodalBox { lo: -2.0, hi: -0.5 };
        let right = RegionSpec::NodalBox { lo: -0.5 + 1e-3, hi: 2.0 };
        let dl = brouwer_degree(&cubic(), &left, &opts).unwrap().value;
        let dr = brouwer_degree(&cubic(), &right, &opts).unwrap().value;
        let du = brouwer_degree(&cubic(), &RegionSpec::Union(vec![left, right]), &opts).unwrap().value;
        assert_eq!((dl, dr, du), (1, 0, 1));
        // removing a zero-free set changes nothing
        let base = RegionSpec::NodalBox { lo: -2.0, hi: 2.0 };
        let ex = RegionSpec::Excise { base: Box::new(base), hole: Box::new(RegionSpec::NodalBox { lo: 0.3, hi: 0.6 }) };
        assert_eq!(brouwer_degree(&cubic(), &ex, &opts).unwrap().value, 1);
        // no zeros inside
        assert_eq!(brouwer_degree(&cubic(), &RegionSpec::NodalBox { lo: 1.5, hi: 3.0 }, &opts).unwrap().value, 0);
    }

    #[test]
    fn boundary_zero_is_an_error() {
        let e = brouwer_degree(&cubic(), &RegionSpec::NodalBox { lo: -2.0, hi: 1.0 }, &DegreeOptions::default()).unwrap_err();
        assert!(matches!(e, Error::BoundarySolution(_)));
    }

    #[test]
    fn coercive_field_has_degree_one() {
        let mesh = Arc::new(Mesh::unit_square(3).unwrap());
        let field = CoefficientField::p_laplacian(1.5, 1e-3);
        let mu = MeasureData::density(DensityExpr::Constant(1.0));
        let r = stabilized_degree(&field, &mu, &mesh, &RegionSpec::PhiBall { radius: 10.0 }, &DegreeOptions::default()).unwrap();
        assert_eq!(r.value, 1);
        assert_eq!(r.solutions.len(), 1);
    }

    #[test]
    fn linear_spd_map() {
        let m = FnMap {
            dim: 2,
            f: Box::new(|x| vec![2.0 * x[0] + x[1] - 1.0, x[0] + 3.0 * x[1]]),
            jac: Box::new(|_| vec![vec![2.0, 1.0], vec![1.0, 3.0]]),
        };
        assert_eq!(brouwer_degree(&m, &RegionSpec::NodalBox { lo: -5.0, hi: 5.0 }, &DegreeOptions::default()).unwrap().value, 1);
    }

    #[test]
    fn odd_field_degree_sign_follows_spectrum() {
        let mesh = Arc::new(Mesh::unit_square(3).unwrap());
        let pairs = dirichlet_eigenpairs(&mesh, 2, 1e-13).unwrap();
        let (l1, l2) = (pairs[0].0, pairs[1].0);
        let opts = DegreeOptions::default();
        let ball = RegionSpec::PhiBall { radius: 5.0 };
        for (lambda, expected) in [(0.5 * l1, 1), (0.5 * (l1 + l2), -1)] {
            let f = CoefficientField::p_laplacian(2.0, 0.0).with_power_reaction(lambda);
            let r = stabilized_degree(&f, &MeasureData::zero(), &mesh, &ball, &opts).unwrap();
            assert_eq!(r.value, expected);
            assert!(r.value % 2 != 0);
        }
    }

    #[test]
    fn halton_points_are_in_unit_cube_and_distinct() {
        let a = halton(1, 20);
        let b = halton(2, 20);
        assert!(a.iter().chain(&b).all(|&v| (0.0..1.0).contains(&v)));
        assert_ne!(a, b);
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
    }
}

//! Right-hand side measures: representations, weak-form decomposition, load
//! vectors and the mollification used by the approximation scheme.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{FeFunction, Geometry, Mesh};
use crate::scalar::{dot, norm, sub, Real, Vec2};
use crate::structural::truncate_tk;

type PointFn<T> = dyn Fn(&Vec2<T>) -> T + Send + Sync;
type VectorFn<T> = dyn Fn(&Vec2<T>) -> Vec2<T> + Send + Sync;

/// Scalar density expressions.
#[derive(Clone)]
pub enum DensityExpr<T> {
    Zero,
    Constant(T),
    /// `coefficient * |x - center|^{-exponent}`.
    RadialPower { exponent: T, center: Vec2<T>, coefficient: T },
    /// `amplitude * sin(pi x) sin(pi y)`, the first Dirichlet mode of the unit square.
    FirstEigenmode { amplitude: T },
    /// `g(t) / width` on the strip of the given width centred on segment `[a, b]`;
    /// `g` is linear along the segment with endpoint values `g`.
    Strip { a: Vec2<T>, b: Vec2<T>, g: [T; 2], width: T },
    Truncated(Box<DensityExpr<T>>, T),
    Sum(Vec<DensityExpr<T>>),
    Custom(Arc<PointFn<T>>),
}

impl<T: fmt::Debug> fmt::Debug for DensityExpr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityExpr::Zero => f.write_str("Zero"),
            DensityExpr::Constant(c) => write!(f, "Constant({c:?})"),
            DensityExpr::RadialPower { exponent, center, coefficient } => {
                write!(f, "RadialPower({coefficient:?} |x - {center:?}|^-{exponent:?})")
            }
            DensityExpr::FirstEigenmode { amplitude } => write!(f, "FirstEigenmode({amplitude:?})"),
            DensityExpr::Strip { a, b, g, width } => write!(f, "Strip({a:?}-{b:?}, g={g:?}, w={width:?})"),
            DensityExpr::Truncated(e, k) => write!(f, "T_{k:?}({e:?})"),
            DensityExpr::Sum(v) => write!(f, "Sum{v:?}"),
            DensityExpr::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl<T: Real> DensityExpr<T> {
    pub fn eval(&self, x: &Vec2<T>) -> T {
        match self {
            DensityExpr::Zero => T::zero(),
            DensityExpr::Constant(c) => *c,
            DensityExpr::RadialPower { exponent, center, coefficient } => {
                *coefficient * norm(&sub(x, center)).powf(-*exponent)
            }
            DensityExpr::FirstEigenmode { amplitude } => {
                *amplitude * (T::PI() * x[0]).sin() * (T::PI() * x[1]).sin()
            }
            DensityExpr::Strip { a, b, g, width } => {
                let (t, dist) = segment_coordinates(a, b, x);
                if t >= T::zero() && t <= T::one() && dist.abs() < *width * T::lit(0.5) {
                    (g[0] + t * (g[1] - g[0])) / *width
                } else {
                    T::zero()
                }
            }
            DensityExpr::Truncated(e, k) => truncate_tk(e.eval(x), *k),
            DensityExpr::Sum(parts) => parts.iter().map(|e| e.eval(x)).sum(),
            DensityExpr::Custom(f) => f(x),
        }
    }

    /// Upper bound for `sup |f|`, if one is known in closed form.
    pub fn sup_bound(&self) -> Option<T> {
        match self {
            DensityExpr::Zero => Some(T::zero()),
            DensityExpr::Constant(c) => Some(c.abs()),
            DensityExpr::FirstEigenmode { amplitude } => Some(amplitude.abs()),
            DensityExpr::Strip { g, width, .. } => Some(g[0].abs().max(g[1].abs()) / *width),
            DensityExpr::Truncated(e, k) => Some(e.sup_bound().map_or(*k, |b| b.min(*k))),
            DensityExpr::Sum(parts) => parts.iter().map(|p| p.sup_bound()).sum(),
            DensityExpr::RadialPower { exponent, .. } if *exponent <= T::zero() => None,
            _ => None,
        }
    }
}

/// Vector field expressions for the `w1` part of a weak-form measure.
#[derive(Clone)]
pub enum VectorExpr<T> {
    Zero,
    Constant(Vec2<T>),
    /// `-g(t) n` on the half-strip swept from segment `[a, b]` along its normal `n`
    /// out of the domain; `-div` of it is the line charge `g` on the segment.
    HalfStrip { a: Vec2<T>, b: Vec2<T>, g: [T; 2], reach: T },
    Custom(Arc<VectorFn<T>>),
}

impl<T: fmt::Debug> fmt::Debug for VectorExpr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorExpr::Zero => f.write_str("Zero"),
            VectorExpr::Constant(c) => write!(f, "Constant({c:?})"),
            VectorExpr::HalfStrip { a, b, g, .. } => write!(f, "HalfStrip({a:?}-{b:?}, g={g:?})"),
            VectorExpr::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl<T: Real> VectorExpr<T> {
    pub fn eval(&self, x: &Vec2<T>) -> Vec2<T> {
        match self {
            VectorExpr::Zero => [T::zero(); 2],
            VectorExpr::Constant(c) => *c,
            VectorExpr::HalfStrip { a, b, g, reach } => {
                let (t, dist) = segment_coordinates(a, b, x);
                if t >= T::zero() && t <= T::one() && dist >= T::zero() && dist <= *reach {
                    let n = unit_normal(a, b);
                    let gv = g[0] + t * (g[1] - g[0]);
                    [-gv * n[0], -gv * n[1]]
                } else {
                    [T::zero(); 2]
                }
            }
            VectorExpr::Custom(f) => f(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Density<T> {
    pub expr: DensityExpr<T>,
    /// Claimed integrability exponent `m` (`f in L^m`).
    pub lm_tag: Option<T>,
}

#[derive(Debug, Clone)]
pub struct LineCharge<T> {
    pub a: Vec2<T>,
    pub b: Vec2<T>,
    /// Linear density at the endpoints.
    pub g: [T; 2],
}

#[derive(Debug, Clone)]
pub struct WeakForm<T> {
    pub w0: DensityExpr<T>,
    pub w1: VectorExpr<T>,
}

/// Right-hand side `mu` in `M_b^p`.
#[derive(Debug, Clone)]
pub enum MeasureData<T> {
    Density(Density<T>),
    LineCharge(LineCharge<T>),
    WeakForm(WeakForm<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalVariation<T> {
    pub value: T,
    /// False when `value` is only an upper bound of the pairing norm (weak form).
    pub exact: bool,
}

/// `(t, signed distance)` of `x` relative to segment `[a, b]` and its left normal.
fn segment_coordinates<T: Real>(a: &Vec2<T>, b: &Vec2<T>, x: &Vec2<T>) -> (T, T) {
    let d = sub(b, a);
    let len2 = dot(&d, &d);
    let r = sub(x, a);
    let t = dot(&r, &d) / len2;
    let n = unit_normal(a, b);
    (t, dot(&r, &n))
}

fn unit_normal<T: Real>(a: &Vec2<T>, b: &Vec2<T>) -> Vec2<T> {
    let d = sub(b, a);
    let l = norm(&d);
    [-d[1] / l, d[0] / l]
}

impl<T: Real> MeasureData<T> {
    pub fn density(expr: DensityExpr<T>) -> Self {
        MeasureData::Density(Density { expr, lm_tag: None })
    }

    pub fn density_in_lm(expr: DensityExpr<T>, m: T) -> Self {
        MeasureData::Density(Density { expr, lm_tag: Some(m) })
    }

    pub fn zero() -> Self {
        Self::density(DensityExpr::Zero)
    }

    /// Line charge on `[a, b]`; admissible only when `1 > N - p` (the segment
    /// must have positive p-capacity).
    pub fn line_charge(a: Vec2<T>, b: Vec2<T>, g: [T; 2], p: T, n: usize) -> Result<Self> {
        if norm(&sub(&b, &a)) == T::zero() {
            return Self::point_mass(a, g[0], p, n);
        }
        let nn = T::from_usize(n).unwrap();
        if !(T::one() > nn - p) {
            return Err(Error::Inadmissible(format!(
                "a segment has null {p}-capacity in R^{n} (needs p > N - 1); line charge not in M_b^p"
            )));
        }
        Ok(MeasureData::LineCharge(LineCharge { a, b, g }))
    }

    /// Point masses never belong to `M_b^p` for `1 < p <= N`: points have null p-capacity.
    pub fn point_mass(x: Vec2<T>, mass: T, p: T, n: usize) -> Result<Self> {
        let nn = T::from_usize(n).unwrap();
        if p <= nn {
            Err(Error::Inadmissible(format!(
                "point mass {mass} at {x:?}: points have null {p}-capacity in R^{n} for p <= N, \
                 so the measure is not absolutely continuous with respect to p-capacity"
            )))
        } else {
            Err(Error::Inadmissible(format!("exponent p = {p} > N = {n} is outside the supported range 1 < p <= N")))
        }
    }

    pub fn weak_form(w0: DensityExpr<T>, w1: VectorExpr<T>) -> Self {
        MeasureData::WeakForm(WeakForm { w0, w1 })
    }

    pub fn lm_tag(&self) -> Option<T> {
        match self {
            MeasureData::Density(d) => d.lm_tag,
            _ => None,
        }
    }

    pub fn is_bounded_density(&self) -> bool {
        matches!(self, MeasureData::Density(d) if d.expr.sup_bound().is_some())
    }

    fn check_mesh(&self, mesh: &Mesh<T>) -> Result<()> {
        if mesh.geometry() != Geometry::Planar {
            match self {
                MeasureData::LineCharge(_) => return Err(Error::invalid("line charges need a planar mesh")),
                MeasureData::WeakForm(w) if matches!(w.w1, VectorExpr::HalfStrip { .. }) => {
                    return Err(Error::invalid("single-layer fields need a planar mesh"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `mu = w0 - div w1`.
    pub fn decompose(&self, mesh: &Mesh<T>) -> Result<(DensityExpr<T>, VectorExpr<T>)> {
        self.check_mesh(mesh)?;
        Ok(match self {
            MeasureData::Density(d) => (d.expr.clone(), VectorExpr::Zero),
            MeasureData::WeakForm(w) => (w.w0.clone(), w.w1.clone()),
            MeasureData::LineCharge(lc) => {
                let reach = domain_diameter(mesh) * T::lit(2.0);
                (DensityExpr::Zero, VectorExpr::HalfStrip { a: lc.a, b: lc.b, g: lc.g, reach })
            }
        })
    }

    /// `L_i = int phi_i dmu` for every node (boundary nodes included).
    pub fn discretize_load(&self, mesh: &Mesh<T>) -> Result<Vec<T>> {
        self.check_mesh(mesh)?;
        let mut load = vec![T::zero(); mesh.n_nodes()];
        match self {
            MeasureData::Density(d) => add_density_load(mesh, &d.expr, &mut load),
            MeasureData::WeakForm(w) => {
                add_density_load(mesh, &w.w0, &mut load);
                add_vector_load(mesh, &w.w1, &mut load);
            }
            MeasureData::LineCharge(lc) => add_line_load(mesh, lc, &mut load),
        }
        Ok(load)
    }

    /// `<mu, v>` through the load vector.
    pub fn pairing(&self, v: &FeFunction<T>) -> Result<T> {
        let load = self.discretize_load(v.mesh())?;
        Ok(load.iter().zip(v.values()).map(|(&l, &x)| l * x).sum())
    }

    /// `int v w0 + int grad v . w1` through the decomposition.
    pub fn pairing_via_decomposition(&self, v: &FeFunction<T>) -> Result<T> {
        let mesh = v.mesh();
        let (w0, w1) = self.decompose(mesh)?;
        let mut load = vec![T::zero(); mesh.n_nodes()];
        add_density_load(mesh, &w0, &mut load);
        add_vector_load(mesh, &w1, &mut load);
        Ok(load.iter().zip(v.values()).map(|(&l, &x)| l * x).sum())
    }

    /// Bounded density approximating `mu` at level `n`: `w0` truncated at `n`,
    /// `w1` smoothed at scale `1/n`.
    pub fn mollify(&self, n: T) -> Result<Self> {
        if !(n >= T::one()) {
            return Err(Error::invalid("mollification level must be >= 1"));
        }
        Ok(match self {
            MeasureData::Density(d) => MeasureData::Density(Density {
                expr: DensityExpr::Truncated(Box::new(d.expr.clone()), n),
                lm_tag: d.lm_tag,
            }),
            MeasureData::LineCharge(lc) => MeasureData::density(moment_free_strip(lc.a, lc.b, lc.g, T::one() / n)),
            MeasureData::WeakForm(w) => {
                let w0 = DensityExpr::Truncated(Box::new(w.w0.clone()), n);
                let div = match &w.w1 {
                    VectorExpr::Zero | VectorExpr::Constant(_) => DensityExpr::Zero,
                    VectorExpr::HalfStrip { a, b, g, .. } => moment_free_strip(*a, *b, *g, T::one() / n),
                    other => {
                        let field = other.clone();
                        let h = T::lit(0.5) / n;
                        DensityExpr::Custom(Arc::new(move |x: &Vec2<T>| {
                            let dx = field.eval(&[x[0] + h, x[1]])[0] - field.eval(&[x[0] - h, x[1]])[0];
                            let dy = field.eval(&[x[0], x[1] + h])[1] - field.eval(&[x[0], x[1] - h])[1];
                            -(dx + dy) / (h + h)
                        }))
                    }
                };
                MeasureData::density(DensityExpr::Sum(vec![w0, div]))
            }
        })
    }

    pub fn total_variation(&self, mesh: &Mesh<T>) -> Result<TotalVariation<T>> {
        self.check_mesh(mesh)?;
        Ok(match self {
            MeasureData::Density(d) => TotalVariation { value: density_l1(mesh, &d.expr), exact: true },
            MeasureData::LineCharge(lc) => {
                TotalVariation { value: abs_linear_integral(lc.g) * norm(&sub(&lc.b, &lc.a)), exact: true }
            }
            MeasureData::WeakForm(w) => {
                // Not a total variation: ||w0||_1 + ||w1||_{p'} with p' = 2 bounds the pairing.
                let w1 = mesh.integrate(|x| {
                    let v = w.w1.eval(x);
                    dot(&v, &v)
                });
                TotalVariation { value: density_l1(mesh, &w.w0) + w1.sqrt(), exact: false }
            }
        })
    }
}

/// Signed strip kernel `3 g / w` on `|rho| < w/4`, `-g / w` on `w/4 < |rho| < w/2`.
/// Both one-sided first moments vanish, so loads of P1 functions kinked along
/// the segment are reproduced exactly.
fn moment_free_strip<T: Real>(a: Vec2<T>, b: Vec2<T>, g: [T; 2], width: T) -> DensityExpr<T> {
    let two = T::lit(2.0);
    DensityExpr::Sum(vec![
        DensityExpr::Strip { a, b, g: [g[0] * two, g[1] * two], width: width / two },
        DensityExpr::Strip { a, b, g: [-g[0], -g[1]], width },
    ])
}

fn domain_diameter<T: Real>(mesh: &Mesh<T>) -> T {
    let mut lo = [T::infinity(); 2];
    let mut hi = [T::neg_infinity(); 2];
    for x in mesh.nodes() {
        for k in 0..2 {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    norm(&sub(&hi, &lo))
}

/// `int_0^1 |g0 + t (g1 - g0)| dt`.
fn abs_linear_integral<T: Real>(g: [T; 2]) -> T {
    let (a, b) = (g[0], g[1]);
    if a * b >= T::zero() {
        (a.abs() + b.abs()) * T::lit(0.5)
    } else {
        (a * a + b * b) / ((a.abs() + b.abs()) * T::lit(2.0))
    }
}

fn density_l1<T: Real>(mesh: &Mesh<T>, expr: &DensityExpr<T>) -> T {
    match expr {
        DensityExpr::Strip { a, b, g, .. } => abs_linear_integral(*g) * norm(&sub(b, a)),
        _ => mesh.integrate(|x| expr.eval(x).abs()),
    }
}

fn add_density_load<T: Real>(mesh: &Mesh<T>, expr: &DensityExpr<T>, load: &mut [T]) {
    match expr {
        DensityExpr::Zero => {}
        DensityExpr::Sum(parts) => parts.iter().for_each(|p| add_density_load(mesh, p, load)),
        DensityExpr::Strip { a, b, g, width } => add_strip_load(mesh, a, b, *g, *width, load),
        _ => {
            for c in mesh.cells() {
                for q in c.quad() {
                    let f = expr.eval(&q.x) * q.weight;
                    for (k, &n) in c.local_nodes().iter().enumerate() {
                        load[n] = load[n] + f * q.shape[k];
                    }
                }
            }
        }
    }
}

fn add_vector_load<T: Real>(mesh: &Mesh<T>, w1: &VectorExpr<T>, load: &mut [T]) {
    match w1 {
        VectorExpr::Zero => {}
        VectorExpr::HalfStrip { a, b, g, reach } => {
            let n = unit_normal(a, b);
            let d = sub(b, a);
            let far = [a[0] + *reach * n[0], a[1] + *reach * n[1]];
            let far_b = [b[0] + *reach * n[0], b[1] + *reach * n[1]];
            let region = [*a, *b, far_b, far];
            let len2 = dot(&d, &d);
            for c in mesh.cells() {
                let tri = cell_polygon(mesh, c.local_nodes());
                let poly = clip_convex(&tri, &region);
                let (area, centroid) = polygon_area_centroid(&poly);
                if area == T::zero() {
                    continue;
                }
                let t = dot(&sub(&centroid, a), &d) / len2;
                let gv = g[0] + t * (g[1] - g[0]);
                for (k, &node) in c.local_nodes().iter().enumerate() {
                    // grad phi . (-g n) integrated exactly (g linear, grad phi constant)
                    load[node] = load[node] - gv * area * dot(&c.grads[k], &n);
                }
            }
        }
        _ => {
            for c in mesh.cells() {
                let mut avg = [T::zero(); 2];
                for q in c.quad() {
                    let w = w1.eval(&q.x);
                    avg[0] = avg[0] + q.weight * w[0];
                    avg[1] = avg[1] + q.weight * w[1];
                }
                for (k, &n) in c.local_nodes().iter().enumerate() {
                    load[n] = load[n] + dot(&c.grads[k], &avg);
                }
            }
        }
    }
}

fn cell_polygon<T: Real>(mesh: &Mesh<T>, nodes: &[usize]) -> Vec<Vec2<T>> {
    nodes.iter().map(|&n| mesh.nodes()[n]).collect()
}

/// Sutherland–Hodgman clipping of `subject` by the convex counterclockwise polygon `clip`.
fn clip_convex<T: Real>(subject: &[Vec2<T>], clip: &[Vec2<T>]) -> Vec<Vec2<T>> {
    let mut clip = clip.to_vec();
    if polygon_area_centroid(&clip).0 < T::zero() {
        clip.reverse();
    }
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (e0, e1) = (clip[i], clip[(i + 1) % clip.len()]);
        let side = |p: &Vec2<T>| (e1[0] - e0[0]) * (p[1] - e0[1]) - (e1[1] - e0[1]) * (p[0] - e0[0]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(&p), side(&q));
            if sp >= T::zero() {
                out.push(p);
            }
            if (sp >= T::zero()) != (sq >= T::zero()) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

/// Signed area and centroid of a simple polygon.
fn polygon_area_centroid<T: Real>(poly: &[Vec2<T>]) -> (T, Vec2<T>) {
    if poly.len() < 3 {
        return (T::zero(), [T::zero(); 2]);
    }
    let mut a2 = T::zero();
    let mut cx = T::zero();
    let mut cy = T::zero();
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let cr = p[0] * q[1] - q[0] * p[1];
        a2 = a2 + cr;
        cx = cx + (p[0] + q[0]) * cr;
        cy = cy + (p[1] + q[1]) * cr;
    }
    if a2 == T::zero() {
        return (T::zero(), [T::zero(); 2]);
    }
    let three = T::lit(3.0);
    (a2 * T::lit(0.5), [cx / (three * a2), cy / (three * a2)])
}

/// Exact load of a strip density: the integrand `g(t) phi_i / width` is
/// quadratic on each clipped polygon, so a fan of edge-midpoint rules is exact.
fn add_strip_load<T: Real>(mesh: &Mesh<T>, a: &Vec2<T>, b: &Vec2<T>, g: [T; 2], width: T, load: &mut [T]) {
    let n = unit_normal(a, b);
    let h = width * T::lit(0.5);
    let region = [
        [a[0] - h * n[0], a[1] - h * n[1]],
        [b[0] - h * n[0], b[1] - h * n[1]],
        [b[0] + h * n[0], b[1] + h * n[1]],
        [a[0] + h * n[0], a[1] + h * n[1]],
    ];
    let d = sub(b, a);
    let len2 = dot(&d, &d);
    let third = T::one() / T::lit(3.0);
    for c in mesh.cells() {
        let tri = cell_polygon(mesh, c.local_nodes());
        let poly = clip_convex(&tri, &region);
        if poly.len() < 3 {
            continue;
        }
        let p0 = tri[0];
        for k in 1..poly.len() - 1 {
            let (v0, v1, v2) = (poly[0], poly[k], poly[k + 1]);
            let area = ((v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1])).abs() * T::lit(0.5);
            for (e0, e1) in [(v0, v1), (v1, v2), (v2, v0)] {
                let m = [(e0[0] + e1[0]) * T::lit(0.5), (e0[1] + e1[1]) * T::lit(0.5)];
                let t = dot(&sub(&m, a), &d) / len2;
                let f = (g[0] + t * (g[1] - g[0])) / width * area * third;
                for (j, &node) in c.local_nodes().iter().enumerate() {
                    // P1 basis value at m: phi_j(p0) + grad phi_j . (m - p0)
                    let phi = if j == 0 { T::one() } else { T::zero() } + dot(&c.grads[j], &sub(&m, &p0));
                    load[node] = load[node] + f * phi;
                }
            }
        }
    }
}

/// Exact line integral of `g phi_i` over the segment, split at cell crossings.
fn add_line_load<T: Real>(mesh: &Mesh<T>, lc: &LineCharge<T>, load: &mut [T]) {
    let d = sub(&lc.b, &lc.a);
    let len = norm(&d);
    // collect crossing parameters
    let mut ts = vec![T::zero(), T::one()];
    for c in mesh.cells() {
        let tri = cell_polygon(mesh, c.local_nodes());
        for e in 0..3 {
            if let Some(t) = segment_edge_param(&lc.a, &d, &tri[e], &tri[(e + 1) % 3]) {
                ts.push(t);
            }
        }
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup_by(|a, b| (*a - *b).abs() <= T::epsilon() * T::lit(16.0));
    let gauss = [T::lit(0.5) - T::lit(0.5) / T::lit(3.0).sqrt(), T::lit(0.5) + T::lit(0.5) / T::lit(3.0).sqrt()];
    for w in ts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 - t0 <= T::zero() {
            continue;
        }
        let tm = (t0 + t1) * T::lit(0.5);
        let xm = [lc.a[0] + tm * d[0], lc.a[1] + tm * d[1]];
        let Some((ci, p0)) = locate(mesh, &xm) else { continue };
        let c = &mesh.cells()[ci];
        for gp in gauss {
            let t = t0 + gp * (t1 - t0);
            let x = [lc.a[0] + t * d[0], lc.a[1] + t * d[1]];
            let gv = lc.g[0] + t * (lc.g[1] - lc.g[0]);
            let wgt = (t1 - t0) * len * T::lit(0.5) * gv;
            for (j, &node) in c.local_nodes().iter().enumerate() {
                let phi = if j == 0 { T::one() } else { T::zero() } + dot(&c.grads[j], &sub(&x, &p0));
                load[node] = load[node] + wgt * phi;
            }
        }
    }
}

/// Parameter `t in [0, 1]` where `a + t d` crosses the edge `[p, q]`, if transversal.
fn segment_edge_param<T: Real>(a: &Vec2<T>, d: &Vec2<T>, p: &Vec2<T>, q: &Vec2<T>) -> Option<T> {
    let e = sub(q, p);
    let den = d[0] * e[1] - d[1] * e[0];
    if den.abs() <= T::epsilon() * norm(d) * norm(&e) {
        // parallel: the edge endpoints are the only breakpoints
        return None;
    }
    let r = sub(p, a);
    let t = (r[0] * e[1] - r[1] * e[0]) / den;
    let s = (r[0] * d[1] - r[1] * d[0]) / den;
    (t >= T::zero() && t <= T::one() && s >= -T::epsilon() && s <= T::one() + T::epsilon()).then_some(t)
}

/// Cell containing `x` and its first vertex.
pub(crate) fn locate<T: Real>(mesh: &Mesh<T>, x: &Vec2<T>) -> Option<(usize, Vec2<T>)> {
    let tol = T::lit(-1e-12);
    mesh.cells().iter().enumerate().find_map(|(ci, c)| {
        let p0 = mesh.nodes()[c.nodes[0]];
        let mut inside = true;
        for j in 0..c.arity {
            let bary = if j == 0 { T::one() } else { T::zero() } + dot(&c.grads[j], &sub(x, &p0));
            if bary < tol {
                inside = false;
                break;
            }
        }
        inside.then_some((ci, p0))
    })
}

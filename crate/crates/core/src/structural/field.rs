//! Coefficient fields `a(x, xi)` and `b(x, s, xi)`, built-in families, and the
//! scaling and truncation homotopies.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Mesh;
use crate::scalar::{dot, norm, Mat2, Real, Vec2};
use crate::structural::truncation::truncate_tk;

/// Principal part `a(x, xi)`.
pub trait Flux<T: Real>: Send + Sync + fmt::Debug {
    fn eval(&self, x: &Vec2<T>, xi: &Vec2<T>) -> Vec2<T>;

    /// `d a / d xi`; central differences unless overridden.
    fn jacobian(&self, x: &Vec2<T>, xi: &Vec2<T>) -> Mat2<T> {
        let mut j = [[T::zero(); 2]; 2];
        for c in 0..2 {
            let h = fd_step(xi[c]);
            let mut xp = *xi;
            let mut xm = *xi;
            xp[c] = xp[c] + h;
            xm[c] = xm[c] - h;
            let (ap, am) = (self.eval(x, &xp), self.eval(x, &xm));
            for r in 0..2 {
                j[r][c] = (ap[r] - am[r]) / (h + h);
            }
        }
        j
    }

    /// Whether `jacobian` is the exact derivative.
    fn analytic_jacobian(&self) -> bool {
        false
    }
}

/// Lower-order term `b(x, s, xi)`.
pub trait Source<T: Real>: Send + Sync + fmt::Debug {
    fn eval(&self, x: &Vec2<T>, s: T, xi: &Vec2<T>) -> T;

    /// `(d b / d s, d b / d xi)`; central differences unless overridden.
    fn partials(&self, x: &Vec2<T>, s: T, xi: &Vec2<T>) -> (T, Vec2<T>) {
        let h = fd_step(s);
        let ds = (self.eval(x, s + h, xi) - self.eval(x, s - h, xi)) / (h + h);
        let mut dxi = [T::zero(); 2];
        for c in 0..2 {
            let h = fd_step(xi[c]);
            let mut xp = *xi;
            let mut xm = *xi;
            xp[c] = xp[c] + h;
            xm[c] = xm[c] - h;
            dxi[c] = (self.eval(x, s, &xp) - self.eval(x, s, &xm)) / (h + h);
        }
        (ds, dxi)
    }

    fn is_zero(&self) -> bool {
        false
    }
}

fn fd_step<T: Real>(v: T) -> T {
    T::epsilon().cbrt() * (T::one() + v.abs())
}

/// Regularized p-Laplacian flux `|xi|_eps^{p-2} xi`, `|xi|_eps = (eps^2 + |xi|^2)^{1/2}`.
#[derive(Debug, Clone, Copy)]
pub struct PLaplacian<T> {
    pub p: T,
    pub eps: T,
}

impl<T: Real> PLaplacian<T> {
    fn modulus(&self, xi: &Vec2<T>) -> T {
        (self.eps * self.eps + dot(xi, xi)).sqrt()
    }
}

impl<T: Real> Flux<T> for PLaplacian<T> {
    fn eval(&self, _x: &Vec2<T>, xi: &Vec2<T>) -> Vec2<T> {
        let m = self.modulus(xi);
        if m == T::zero() {
            return [T::zero(); 2];
        }
        let c = m.powf(self.p - T::lit(2.0));
        [c * xi[0], c * xi[1]]
    }

    fn jacobian(&self, _x: &Vec2<T>, xi: &Vec2<T>) -> Mat2<T> {
        // Floor keeps the unregularized field finite at xi = 0.
        let m = self.modulus(xi).max(T::min_positive_value().sqrt());
        let c = m.powf(self.p - T::lit(2.0));
        let k = (self.p - T::lit(2.0)) / (m * m);
        [
            [c * (T::one() + k * xi[0] * xi[0]), c * k * xi[0] * xi[1]],
            [c * k * xi[1] * xi[0], c * (T::one() + k * xi[1] * xi[1])],
        ]
    }

    fn analytic_jacobian(&self) -> bool {
        true
    }
}

/// `|xi|_eps^{p-2} xi + c xi / (1 + |xi|^2)`; asymptotically the p-Laplacian.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedPLaplacian<T> {
    pub base: PLaplacian<T>,
    pub c: T,
}

impl<T: Real> Flux<T> for PerturbedPLaplacian<T> {
    fn eval(&self, x: &Vec2<T>, xi: &Vec2<T>) -> Vec2<T> {
        let a = self.base.eval(x, xi);
        let d = self.c / (T::one() + dot(xi, xi));
        [a[0] + d * xi[0], a[1] + d * xi[1]]
    }

    fn jacobian(&self, x: &Vec2<T>, xi: &Vec2<T>) -> Mat2<T> {
        let mut j = self.base.jacobian(x, xi);
        let den = T::one() + dot(xi, xi);
        let c1 = self.c / den;
        let c2 = T::lit(2.0) * self.c / (den * den);
        for r in 0..2 {
            for s in 0..2 {
                let id = if r == s { T::one() } else { T::zero() };
                j[r][s] = j[r][s] + c1 * id - c2 * xi[r] * xi[s];
            }
        }
        j
    }

    fn analytic_jacobian(&self) -> bool {
        true
    }
}

/// `kappa * xi`.
#[derive(Debug, Clone, Copy)]
pub struct LinearDiffusion<T> {
    pub kappa: T,
}

impl<T: Real> Flux<T> for LinearDiffusion<T> {
    fn eval(&self, _x: &Vec2<T>, xi: &Vec2<T>) -> Vec2<T> {
        [self.kappa * xi[0], self.kappa * xi[1]]
    }

    fn jacobian(&self, _x: &Vec2<T>, _xi: &Vec2<T>) -> Mat2<T> {
        [[self.kappa, T::zero()], [T::zero(), self.kappa]]
    }

    fn analytic_jacobian(&self) -> bool {
        true
    }
}

/// `xi / (1 + |xi|)`: monotone but only linearly growing, hence not coercive for `p > 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Saturating;

impl<T: Real> Flux<T> for Saturating {
    fn eval(&self, _x: &Vec2<T>, xi: &Vec2<T>) -> Vec2<T> {
        let d = T::one() / (T::one() + norm(xi));
        [d * xi[0], d * xi[1]]
    }
}

/// Isotropic flux `A(|xi|) xi / |xi|` with `A` piecewise linear through a table
/// of `(|xi|, A)` pairs and extended by `A_last (r / r_last)^{p-1}`.
#[derive(Debug, Clone)]
pub struct TabulatedFlux<T> {
    magnitudes: Vec<T>,
    values: Vec<T>,
    p: T,
}

impl<T: Real> TabulatedFlux<T> {
    pub fn new(magnitudes: Vec<T>, values: Vec<T>, p: T) -> Result<Self> {
        if magnitudes.len() != values.len() || magnitudes.len() < 2 {
            return Err(Error::invalid("tabulated flux needs >= 2 matching (|xi|, A) pairs"));
        }
        if magnitudes[0] != T::zero() || values[0] != T::zero() {
            return Err(Error::invalid("tabulated flux must start at (0, 0)"));
        }
        for w in magnitudes.windows(2).zip(values.windows(2)) {
            if !(w.0[1] > w.0[0]) || !(w.1[1] > w.1[0]) {
                return Err(Error::invalid("tabulated flux must be strictly increasing"));
            }
        }
        Ok(TabulatedFlux { magnitudes, values, p })
    }

    fn amplitude(&self, r: T) -> T {
        let n = self.magnitudes.len();
        if r >= self.magnitudes[n - 1] {
            return self.values[n - 1] * (r / self.magnitudes[n - 1]).powf(self.p - T::one());
        }
        let i = self.magnitudes.partition_point(|&m| m <= r).saturating_sub(1);
        let (r0, r1) = (self.magnitudes[i], self.magnitudes[i + 1]);
        let t = (r - r0) / (r1 - r0);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }
}

impl<T: Real> Flux<T> for TabulatedFlux<T> {
    fn eval(&self, _x: &Vec2<T>, xi: &Vec2<T>) -> Vec2<T> {
        let r = norm(xi);
        if r == T::zero() {
            return [T::zero(); 2];
        }
        let c = self.amplitude(r) / r;
        [c * xi[0], c * xi[1]]
    }
}

type FluxFn<T> = dyn Fn(&Vec2<T>, &Vec2<T>) -> Vec2<T> + Send + Sync;
type SourceFn<T> = dyn Fn(&Vec2<T>, T, &Vec2<T>) -> T + Send + Sync;

/// Flux from a closure; Jacobian by finite differences.
#[derive(Clone)]
pub struct FnFlux<T>(pub Arc<FluxFn<T>>);

impl<T> fmt::Debug for FnFlux<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnFlux")
    }
}

impl<T: Real> Flux<T> for FnFlux<T> {
    fn eval(&self, x: &Vec2<T>, xi: &Vec2<T>) -> Vec2<T> {
        (self.0)(x, xi)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroSource;

impl<T: Real> Source<T> for ZeroSource {
    fn eval(&self, _x: &Vec2<T>, _s: T, _xi: &Vec2<T>) -> T {
        T::zero()
    }

    fn partials(&self, _x: &Vec2<T>, _s: T, _xi: &Vec2<T>) -> (T, Vec2<T>) {
        (T::zero(), [T::zero(); 2])
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// `-lambda |s|_eps^{p-2} s`.
#[derive(Debug, Clone, Copy)]
pub struct PowerReaction<T> {
    pub lambda: T,
    pub p: T,
    pub eps: T,
}

impl<T: Real> Source<T> for PowerReaction<T> {
    fn eval(&self, _x: &Vec2<T>, s: T, _xi: &Vec2<T>) -> T {
        let m = (self.eps * self.eps + s * s).sqrt();
        if m == T::zero() {
            return T::zero();
        }
        -self.lambda * m.powf(self.p - T::lit(2.0)) * s
    }

    fn partials(&self, _x: &Vec2<T>, s: T, _xi: &Vec2<T>) -> (T, Vec2<T>) {
        let m = (self.eps * self.eps + s * s).sqrt().max(T::min_positive_value().sqrt());
        let c = m.powf(self.p - T::lit(2.0));
        let d = -self.lambda * c * (T::one() + (self.p - T::lit(2.0)) * s * s / (m * m));
        (d, [T::zero(); 2])
    }
}

/// `c s^3`.
#[derive(Debug, Clone, Copy)]
pub struct CubicReaction<T> {
    pub c: T,
}

impl<T: Real> Source<T> for CubicReaction<T> {
    fn eval(&self, _x: &Vec2<T>, s: T, _xi: &Vec2<T>) -> T {
        self.c * s * s * s
    }

    fn partials(&self, _x: &Vec2<T>, s: T, _xi: &Vec2<T>) -> (T, Vec2<T>) {
        (T::lit(3.0) * self.c * s * s, [T::zero(); 2])
    }
}

/// `c atan(s)`: bounded and monotone.
#[derive(Debug, Clone, Copy)]
pub struct ArctanReaction<T> {
    pub c: T,
}

impl<T: Real> Source<T> for ArctanReaction<T> {
    fn eval(&self, _x: &Vec2<T>, s: T, _xi: &Vec2<T>) -> T {
        self.c * s.atan()
    }

    fn partials(&self, _x: &Vec2<T>, s: T, _xi: &Vec2<T>) -> (T, Vec2<T>) {
        (self.c / (T::one() + s * s), [T::zero(); 2])
    }
}

/// Bounded gradient drift `c (d . xi) / (1 + |xi|)`.
#[derive(Debug, Clone, Copy)]
pub struct BoundedDrift<T> {
    pub c: T,
    pub direction: Vec2<T>,
}

impl<T: Real> Source<T> for BoundedDrift<T> {
    fn eval(&self, _x: &Vec2<T>, _s: T, xi: &Vec2<T>) -> T {
        self.c * dot(&self.direction, xi) / (T::one() + norm(xi))
    }
}

/// Source from a closure; partials by finite differences.
#[derive(Clone)]
pub struct FnSource<T>(pub Arc<SourceFn<T>>);

impl<T> fmt::Debug for FnSource<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnSource")
    }
}

impl<T: Real> Source<T> for FnSource<T> {
    fn eval(&self, x: &Vec2<T>, s: T, xi: &Vec2<T>) -> T {
        (self.0)(x, s, xi)
    }
}

/// `t a(x, t^{-1/(p-1)} xi)` for `0 < t <= 1`.
#[derive(Debug, Clone)]
pub struct ScaledFlux<T> {
    inner: Arc<dyn Flux<T>>,
    t: T,
    sigma: T,
}

impl<T: Real> Flux<T> for ScaledFlux<T> {
    fn eval(&self, x: &Vec2<T>, xi: &Vec2<T>) -> Vec2<T> {
        let a = self.inner.eval(x, &[self.sigma * xi[0], self.sigma * xi[1]]);
        [self.t * a[0], self.t * a[1]]
    }

    fn jacobian(&self, x: &Vec2<T>, xi: &Vec2<T>) -> Mat2<T> {
        let j = self.inner.jacobian(x, &[self.sigma * xi[0], self.sigma * xi[1]]);
        let f = self.t * self.sigma;
        [[f * j[0][0], f * j[0][1]], [f * j[1][0], f * j[1][1]]]
    }

    fn analytic_jacobian(&self) -> bool {
        self.inner.analytic_jacobian()
    }
}

/// `t b(x, t^{-1/(p-1)} s, t^{-1/(p-1)} xi)` for `0 < t <= 1`.
#[derive(Debug, Clone)]
pub struct ScaledSource<T> {
    inner: Arc<dyn Source<T>>,
    t: T,
    sigma: T,
}

impl<T: Real> Source<T> for ScaledSource<T> {
    fn eval(&self, x: &Vec2<T>, s: T, xi: &Vec2<T>) -> T {
        self.t * self.inner.eval(x, self.sigma * s, &[self.sigma * xi[0], self.sigma * xi[1]])
    }

    fn partials(&self, x: &Vec2<T>, s: T, xi: &Vec2<T>) -> (T, Vec2<T>) {
        let (ds, dxi) = self.inner.partials(x, self.sigma * s, &[self.sigma * xi[0], self.sigma * xi[1]]);
        let f = self.t * self.sigma;
        (f * ds, [f * dxi[0], f * dxi[1]])
    }

    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
}

/// `T_level(b)`.
#[derive(Debug, Clone)]
pub struct TruncatedSource<T> {
    inner: Arc<dyn Source<T>>,
    level: T,
}

impl<T: Real> Source<T> for TruncatedSource<T> {
    fn eval(&self, x: &Vec2<T>, s: T, xi: &Vec2<T>) -> T {
        truncate_tk(self.inner.eval(x, s, xi), self.level)
    }

    fn partials(&self, x: &Vec2<T>, s: T, xi: &Vec2<T>) -> (T, Vec2<T>) {
        if self.inner.eval(x, s, xi).abs() < self.level {
            self.inner.partials(x, s, xi)
        } else {
            (T::zero(), [T::zero(); 2])
        }
    }

    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
}

/// Nonnegative data function (`alpha_0`, `alpha_1`, `alpha_2`).
#[derive(Clone)]
pub enum DataFn<T> {
    Zero,
    Constant(T),
    Custom(Arc<dyn Fn(&Vec2<T>) -> T + Send + Sync>),
}

impl<T: Real> DataFn<T> {
    pub fn eval(&self, x: &Vec2<T>) -> T {
        match self {
            DataFn::Zero => T::zero(),
            DataFn::Constant(c) => *c,
            DataFn::Custom(f) => f(x),
        }
    }

    /// `(int |f|^q)^{1/q}` over the mesh.
    pub fn lq_norm(&self, mesh: &Mesh<T>, q: T) -> T {
        match self {
            DataFn::Zero => T::zero(),
            _ => mesh.integrate(|x| self.eval(x).abs().powf(q)).powf(T::one() / q),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for DataFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataFn::Zero => f.write_str("Zero"),
            DataFn::Constant(c) => write!(f, "Constant({c:?})"),
            DataFn::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Structural constants of the pair `(a, b)`.
#[derive(Debug, Clone)]
pub struct GrowthData<T> {
    pub p: T,
    pub nu: T,
    pub beta: T,
    pub alpha0: DataFn<T>,
    pub alpha1: DataFn<T>,
    pub alpha2: DataFn<T>,
    /// Gradient growth exponent of `b`.
    pub q: T,
    /// Zero-order growth exponent of `b`.
    pub r: T,
}

impl<T: Real> GrowthData<T> {
    /// Default data for a field of order `p`: `q = r = p - 1`, all alphas zero.
    pub fn new(p: T, nu: T, beta: T) -> Self {
        GrowthData {
            p,
            nu,
            beta,
            alpha0: DataFn::Zero,
            alpha1: DataFn::Zero,
            alpha2: DataFn::Zero,
            q: p - T::one(),
            r: p - T::one(),
        }
    }

    /// Checks `nu > 0`, `1 < p <= N` and the growth windows for `q` and `r`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let nn = T::from_usize(n).unwrap();
        let one = T::one();
        if !(self.nu > T::zero()) {
            return Err(Error::invalid("coercivity constant nu must be positive"));
        }
        if !(self.p > one && self.p <= nn) {
            return Err(Error::invalid(format!("exponent p = {} outside 1 < p <= N = {n}", self.p)));
        }
        if self.beta < T::zero() {
            return Err(Error::invalid("growth constant beta must be nonnegative"));
        }
        let q_max = nn * (self.p - one) / (nn - one);
        if !(self.q > T::zero() && self.q < q_max) {
            return Err(Error::invalid(format!("gradient growth q = {} outside (0, {q_max})", self.q)));
        }
        if self.p < nn {
            let r_max = nn * (self.p - one) / (nn - self.p);
            if !(self.r > T::zero() && self.r < r_max) {
                return Err(Error::invalid(format!("zero-order growth r = {} outside (0, {r_max})", self.r)));
            }
        } else if !(self.r > T::zero() && self.r.is_finite()) {
            return Err(Error::invalid("zero-order growth r must be positive and finite"));
        }
        Ok(())
    }

    /// Conjugate exponent `p' = p / (p - 1)`.
    pub fn p_conj(&self) -> T {
        self.p / (self.p - T::one())
    }

    pub fn alpha0_l1(&self, mesh: &Mesh<T>) -> T {
        self.alpha0.lq_norm(mesh, T::one())
    }

    pub fn alpha1_lpconj(&self, mesh: &Mesh<T>) -> T {
        self.alpha1.lq_norm(mesh, self.p_conj())
    }

    pub fn alpha2_l1(&self, mesh: &Mesh<T>) -> T {
        self.alpha2.lq_norm(mesh, T::one())
    }
}

/// Asymptotic pair `(a_inf, b_inf)`.
#[derive(Debug, Clone)]
pub struct Asymptotics<T> {
    pub a: Arc<dyn Flux<T>>,
    pub b: Arc<dyn Source<T>>,
}

#[derive(Debug, Clone)]
pub struct CoefficientField<T> {
    pub growth: GrowthData<T>,
    pub a: Arc<dyn Flux<T>>,
    pub b: Arc<dyn Source<T>>,
    pub asymptotics: Option<Asymptotics<T>>,
    /// Claim that `a_inf` and `b_inf` are odd.
    pub odd_asymptotics: bool,
    /// Regularization `eps` of built-in degenerate fields (0 for custom ones).
    pub regularization: T,
}

impl<T: Real> CoefficientField<T> {
    /// `a = |xi|_eps^{p-2} xi`, `b = 0`, with `a_inf = |xi|^{p-2} xi`, `b_inf = 0`.
    pub fn p_laplacian(p: T, eps: T) -> Self {
        let one = T::one();
        let two = T::lit(2.0);
        let mut growth = GrowthData::new(p, one, one);
        if p < two && eps > T::zero() {
            // |xi|^p - |xi|_eps^{p-2}|xi|^2 <= eps^p
            growth.alpha0 = DataFn::Constant(eps.powf(p));
        }
        if p > two {
            growth.beta = two.powf((p - one) / two);
            if eps > T::zero() {
                growth.alpha1 = DataFn::Constant(growth.beta * eps.powf(p - one));
            }
        }
        CoefficientField {
            growth,
            a: Arc::new(PLaplacian { p, eps }),
            b: Arc::new(ZeroSource),
            asymptotics: Some(Asymptotics { a: Arc::new(PLaplacian { p, eps: T::zero() }), b: Arc::new(ZeroSource) }),
            odd_asymptotics: true,
            regularization: eps,
        }
    }

    /// `a = |xi|_eps^{p-2} xi + c xi / (1 + |xi|^2)` with `c >= 0`.
    pub fn perturbed_p_laplacian(p: T, eps: T, c: T) -> Self {
        let mut f = Self::p_laplacian(p, eps);
        f.a = Arc::new(PerturbedPLaplacian { base: PLaplacian { p, eps }, c });
        let extra = c.abs() * T::lit(0.5);
        f.growth.alpha1 = match f.growth.alpha1 {
            DataFn::Constant(v) => DataFn::Constant(v + extra),
            _ => DataFn::Constant(extra),
        };
        f
    }

    /// `a = kappa xi` (order `p = 2`).
    pub fn linear_diffusion(kappa: T) -> Self {
        let growth = GrowthData::new(T::lit(2.0), kappa, kappa);
        let a: Arc<dyn Flux<T>> = Arc::new(LinearDiffusion { kappa });
        CoefficientField {
            growth,
            a: Arc::clone(&a),
            b: Arc::new(ZeroSource),
            asymptotics: Some(Asymptotics { a, b: Arc::new(ZeroSource) }),
            odd_asymptotics: true,
            regularization: T::zero(),
        }
    }

    /// Replaces `b` (and `b_inf`) by `-lambda |s|^{p-2} s`.
    pub fn with_power_reaction(mut self, lambda: T) -> Self {
        let p = self.growth.p;
        let eps = if p == T::lit(2.0) { T::zero() } else { self.regularization };
        self.b = Arc::new(PowerReaction { lambda, p, eps });
        if let Some(asym) = self.asymptotics.as_mut() {
            asym.b = Arc::new(PowerReaction { lambda, p, eps: T::zero() });
        }
        self.growth.beta = self.growth.beta.max(lambda.abs());
        self.growth.r = p - T::one();
        self
    }

    /// Replaces `b` by an arbitrary source; `b_inf` must be supplied separately.
    pub fn with_source(mut self, b: Arc<dyn Source<T>>, b_inf: Option<Arc<dyn Source<T>>>) -> Self {
        self.b = b;
        match (self.asymptotics.as_mut(), b_inf) {
            (Some(asym), Some(bi)) => asym.b = bi,
            (_, None) => self.asymptotics = None,
            (None, Some(_)) => {}
        }
        self
    }

    pub fn has_lower_order_term(&self) -> bool {
        !self.b.is_zero()
    }

    pub fn p(&self) -> T {
        self.growth.p
    }

    pub fn nu(&self) -> T {
        self.growth.nu
    }
}

/// Kinds of homotopy acting on a base field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomotopyKind {
    Scaling,
    Truncation,
    Product,
}

/// A base field together with a homotopy kind; `at` evaluates the family.
#[derive(Debug, Clone)]
pub struct HomotopyFamily<T> {
    pub base: CoefficientField<T>,
    pub kind: HomotopyKind,
}

impl<T: Real> HomotopyFamily<T> {
    pub fn new(base: CoefficientField<T>, kind: HomotopyKind) -> Result<Self> {
        if matches!(kind, HomotopyKind::Scaling | HomotopyKind::Product) && base.asymptotics.is_none() {
            return Err(Error::MissingAsymptotics);
        }
        Ok(HomotopyFamily { base, kind })
    }

    /// Member at parameters `(t, tau)`; `tau` is ignored by the scaling family
    /// and `t` by the truncation family.
    pub fn at(&self, t: T, tau: T) -> Result<CoefficientField<T>> {
        match self.kind {
            HomotopyKind::Scaling => scaling_homotopy(&self.base, t),
            HomotopyKind::Truncation => truncation_homotopy(&self.base, tau),
            HomotopyKind::Product => truncation_homotopy(&scaling_homotopy(&self.base, t)?, tau),
        }
    }
}

/// `a_t(x, xi) = t a(x, t^{-1/(p-1)} xi)`, `b_t` likewise, with `(a_inf, b_inf)` at `t = 0`.
pub fn scaling_homotopy<T: Real>(field: &CoefficientField<T>, t: T) -> Result<CoefficientField<T>> {
    let asym = field.asymptotics.as_ref().ok_or(Error::MissingAsymptotics)?;
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::invalid(format!("homotopy parameter t = {t} outside [0, 1]")));
    }
    let mut out = field.clone();
    if t == T::one() {
        return Ok(out);
    }
    if t == T::zero() {
        out.a = Arc::clone(&asym.a);
        out.b = Arc::clone(&asym.b);
        out.regularization = T::zero();
        return Ok(out);
    }
    let sigma = t.powf(-T::one() / (field.growth.p - T::one()));
    out.a = Arc::new(ScaledFlux { inner: Arc::clone(&field.a), t, sigma });
    out.b = Arc::new(ScaledSource { inner: Arc::clone(&field.b), t, sigma });
    out.regularization = field.regularization / sigma;
    Ok(out)
}

/// Same `a`, `b` replaced by `T_{1/tau}(b)`.
pub fn truncation_homotopy<T: Real>(field: &CoefficientField<T>, tau: T) -> Result<CoefficientField<T>> {
    if !(tau > T::zero() && tau <= T::one()) {
        return Err(Error::invalid(format!("truncation parameter tau = {tau} outside (0, 1]")));
    }
    let mut out = field.clone();
    out.b = Arc::new(TruncatedSource { inner: Arc::clone(&field.b), level: T::one() / tau });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fd_jacobian(a: &dyn Flux<f64>, x: &Vec2<f64>, xi: &Vec2<f64>) -> Mat2<f64> {
        let h = 1e-6;
        let mut j = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut p = *xi;
            let mut m = *xi;
            p[c] += h;
            m[c] -= h;
            let (ap, am) = (a.eval(x, &p), a.eval(x, &m));
            for r in 0..2 {
                j[r][c] = (ap[r] - am[r]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        let x = [0.3, 0.4];
        let fluxes: Vec<Arc<dyn Flux<f64>>> = vec![
            Arc::new(PLaplacian { p: 1.5, eps: 1e-3 }),
            Arc::new(PLaplacian { p: 3.0, eps: 1e-3 }),
            Arc::new(PerturbedPLaplacian { base: PLaplacian { p: 1.7, eps: 1e-2 }, c: 0.8 }),
            Arc::new(LinearDiffusion { kappa: 2.5 }),
        ];
        for a in &fluxes {
            for xi in [[0.7, -1.2], [3.0, 0.1], [-0.05, 0.02]] {
                let ja = a.jacobian(&x, &xi);
                let jf = fd_jacobian(a.as_ref(), &x, &xi);
                for r in 0..2 {
                    for c in 0..2 {
                        assert_abs_diff_eq!(ja[r][c], jf[r][c], epsilon = 1e-5 * (1.0 + jf[r][c].abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn plaplacian_jacobian_is_spd() {
        let a = PLaplacian::<f64> { p: 1.5, eps: 1e-6 };
        for xi in [[1.0, 2.0], [1e-4, -3e-4], [100.0, 0.0]] {
            let j = a.jacobian(&[0.0, 0.0], &xi);
            assert_abs_diff_eq!(j[0][1], j[1][0], epsilon = 1e-14 * j[0][0].abs());
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            assert!(j[0][0] > 0.0 && det > 0.0);
        }
    }

    #[test]
    fn scaling_homotopy_endpoints() {
        let base = CoefficientField::perturbed_p_laplacian(1.6, 0.0, 1.0).with_power_reaction(0.7);
        let x = [0.2, 0.1];
        let one = scaling_homotopy(&base, 1.0).unwrap();
        let zero = scaling_homotopy(&base, 0.0).unwrap();
        let asym = base.asymptotics.as_ref().unwrap();
        for xi in [[0.5, 0.25], [-3.0, 1.0]] {
            assert_eq!(one.a.eval(&x, &xi), base.a.eval(&x, &xi));
            assert_eq!(zero.a.eval(&x, &xi), asym.a.eval(&x, &xi));
            assert_eq!(zero.b.eval(&x, 1.3, &xi), asym.b.eval(&x, 1.3, &xi));
        }
    }

    #[test]
    fn scaling_leaves_homogeneous_fields_unchanged() {
        let base = CoefficientField::p_laplacian(1.5, 0.0).with_power_reaction(2.0);
        for t in [0.01, 0.25, 0.5, 0.9] {
            let f = scaling_homotopy(&base, t).unwrap();
            for xi in [[0.5, 0.25], [-3.0, 1.0]] {
                let (a, b) = (f.a.eval(&[0.0, 0.0], &xi), base.a.eval(&[0.0, 0.0], &xi));
                assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-12);
                assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-12);
                assert_abs_diff_eq!(
                    f.b.eval(&[0.0, 0.0], -0.8, &xi),
                    base.b.eval(&[0.0, 0.0], -0.8, &xi),
                    epsilon = 1e-12
                );
            }
        }
        assert!(scaling_homotopy(&base, 1.5).is_err());
        let mut no_asym = base.clone();
        no_asym.asymptotics = None;
        assert!(matches!(scaling_homotopy(&no_asym, 0.5), Err(Error::MissingAsymptotics)));
    }

    #[test]
    fn truncation_homotopy_examples() {
        let f = CoefficientField::p_laplacian(2.0, 0.0).with_source(Arc::new(CubicReaction { c: 1.0 }), None);
        let x = [0.0, 0.0];
        let xi = [0.0, 0.0];
        assert_eq!(truncation_homotopy(&f, 1.0).unwrap().b.eval(&x, 2.0, &xi), 1.0);
        assert_abs_diff_eq!(truncation_homotopy(&f, 0.1).unwrap().b.eval(&x, 2.0, &xi), 8.0, epsilon = 1e-12);
        assert!(truncation_homotopy(&f, 0.0).is_err());
        assert!(truncation_homotopy(&f, 1.5).is_err());
        let t = truncation_homotopy(&f, 0.25).unwrap();
        for k in -50..50 {
            assert!(t.b.eval(&x, k as f64 * 0.3, &xi).abs() <= 4.0);
        }
    }

    #[test]
    fn growth_windows() {
        let g = GrowthData::new(2.0, 1.0, 1.0);
        assert!(g.validate(2).is_ok());
        assert!(GrowthData::new(2.5, 1.0, 1.0).validate(2).is_err());
        assert!(GrowthData::new(1.0, 1.0, 1.0).validate(2).is_err());
        assert!(GrowthData::new(2.0, 0.0, 1.0).validate(2).is_err());
        let mut g = GrowthData::new(1.5, 1.0, 1.0);
        g.q = 1.0; // window is q < 2 * 0.5 / 1 = 1
        assert!(g.validate(2).is_err());
        g.q = 0.9;
        g.r = 1.0; // window r < 2 * 0.5 / 0.5 = 2
        assert!(g.validate(2).is_ok());
    }

    #[test]
    fn tabulated_flux_interpolates() {
        let f = TabulatedFlux::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 4.0], 2.0).unwrap();
        let a = f.eval(&[0.0, 0.0], &[1.5, 0.0]);
        assert_abs_diff_eq!(a[0], 2.5, epsilon = 1e-14);
        let a = f.eval(&[0.0, 0.0], &[0.0, 4.0]);
        assert_abs_diff_eq!(a[1], 8.0, epsilon = 1e-14);
        assert!(TabulatedFlux::new(vec![0.0, 1.0], vec![0.0, -1.0], 2.0).is_err());
    }
}

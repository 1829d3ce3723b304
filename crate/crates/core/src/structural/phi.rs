//! The change of variables `phi_p` and the bounded primitive `psi`.
//!
//! Both are primitives of `{(1+s^2) [log(e+s^2)]^4}^{-1/(2q)}` (with `q = p`
//! for `phi_p` and `q = 1` for `psi`). Substituting `s = sinh(w)` turns the
//! integrand into the smooth function
//! `g_q(w) = cosh(w)^{1-1/q} L(w)^{-2/q}` with `L(w) = log(e + sinh(w)^2)`,
//! which is tabulated on a uniform `w`-grid and evaluated by cubic Hermite
//! interpolation (the derivative `g_q` is known exactly at every node).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::quadrature;
use crate::scalar::Real;

const TABLE_W_MAX: f64 = 40.0;
const TABLE_PANELS: usize = 32_768;
const QUAD_REL_TOL: f64 = 1e-13;

/// `log(e + sinh(w)^2)` without overflow for large `w`.
fn log_e_sinh2(w: f64) -> f64 {
    let w = w.abs();
    let em = (-2.0 * w).exp();
    let half = 0.5 * (1.0 - em);
    2.0 * w + (half * half + std::f64::consts::E * em).ln()
}

/// `cosh(w)^c` without overflow for large `w`.
fn cosh_pow(w: f64, c: f64) -> f64 {
    let w = w.abs();
    (c * (w + (0.5 * (1.0 + (-2.0 * w).exp())).ln())).exp()
}

fn integrand(w: f64, q: f64) -> f64 {
    cosh_pow(w, 1.0 - 1.0 / q) * log_e_sinh2(w).powf(-2.0 / q)
}

#[derive(Debug)]
struct PrimitiveTable {
    q: f64,
    h: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl PrimitiveTable {
    fn build(q: f64) -> Self {
        let h = TABLE_W_MAX / TABLE_PANELS as f64;
        let mut values = Vec::with_capacity(TABLE_PANELS + 1);
        let mut slopes = Vec::with_capacity(TABLE_PANELS + 1);
        // Neumaier summation of the panel integrals.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        values.push(0.0);
        slopes.push(integrand(0.0, q));
        let f = |w: f64| integrand(w, q);
        for i in 0..TABLE_PANELS {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let (v, _) = quadrature::gk15(&f, a, b);
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
            values.push(sum + comp);
            slopes.push(integrand(b, q));
        }
        PrimitiveTable { q, h, values, slopes }
    }

    fn eval(&self, w: f64) -> f64 {
        if w >= TABLE_W_MAX {
            let tail = quadrature::integrate(|v| integrand(v, self.q), TABLE_W_MAX, w, QUAD_REL_TOL, 0.0);
            return self.values[TABLE_PANELS] + tail;
        }
        let x = w / self.h;
        let i = (x.floor() as usize).min(TABLE_PANELS - 1);
        let t = x - i as f64;
        let (f0, f1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.h * self.slopes[i], self.h * self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * f0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * f1 + (t3 - t2) * d1
    }
}

fn table(q: f64) -> Arc<PrimitiveTable> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<PrimitiveTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&q.to_bits()) {
        return Arc::clone(t);
    }
    // Build outside the lock; a racing thread may build the same table twice.
    let built = Arc::new(PrimitiveTable::build(q));
    Arc::clone(cache.lock().unwrap().entry(q.to_bits()).or_insert(built))
}

fn odd_extend<T: Real>(s: T, magnitude: f64) -> T {
    let v = T::lit(magnitude);
    if s < T::zero() {
        -v
    } else {
        v
    }
}

/// `phi_p'(s) = {(1+s^2) [log(e+s^2)]^4}^{-1/(2p)}`.
pub fn phi_p_prime<T: Real>(s: T, p: T) -> T {
    let s2 = s * s;
    let l = (T::E() + s2).ln();
    ((T::one() + s2) * l.powi(4)).powf(-T::one() / (T::lit(2.0) * p))
}

/// `phi_p(s)`, evaluated from the cached interpolation table.
pub fn phi_p<T: Real>(s: T, p: T) -> T {
    let w = s.as_f64().abs().asinh();
    odd_extend(s, table(p.as_f64()).eval(w))
}

/// `phi_p(s)` by direct adaptive quadrature (no cache).
pub fn phi_p_quadrature<T: Real>(s: T, p: T) -> T {
    let q = p.as_f64();
    let w = s.as_f64().abs().asinh();
    odd_extend(s, quadrature::integrate(|v| integrand(v, q), 0.0, w, QUAD_REL_TOL, 0.0))
}

/// `psi'(s) = (phi_p'(s))^p = {(1+s^2) [log(e+s^2)]^4}^{-1/2}`, independent of `p`.
pub fn psi_prime<T: Real>(s: T) -> T {
    let s2 = s * s;
    let l = (T::E() + s2).ln();
    T::one() / ((T::one() + s2).sqrt() * l * l)
}

/// Bounded, odd, increasing primitive of `psi'` with `psi(0) = 0`.
pub fn psi<T: Real>(s: T) -> T {
    let w = s.as_f64().abs().asinh();
    odd_extend(s, table(1.0).eval(w))
}

pub fn psi_quadrature<T: Real>(s: T) -> T {
    phi_p_quadrature(s, T::one())
}

/// `||psi||_inf = lim_{s -> inf} psi(s)`.
pub fn psi_sup<T: Real>() -> T {
    static SUP: OnceLock<f64> = OnceLock::new();
    // w = z / (1 - z) maps [0, 1) onto [0, inf); the mapped integrand tends to 1/4.
    let v = *SUP.get_or_init(|| {
        quadrature::integrate(
            |z: f64| {
                let w = z / (1.0 - z);
                integrand(w, 1.0) / ((1.0 - z) * (1.0 - z))
            },
            0.0,
            1.0,
            1e-14,
            0.0,
        )
    });
    T::lit(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Independent oracle: composite Gauss–Legendre (10 points) directly in
    /// the original variable `s`.
    fn gauss_legendre_in_s(f: impl Fn(f64) -> f64, b: f64, panels: usize) -> f64 {
        const X: [f64; 5] = [
            0.148874338981631210884826001129720,
            0.433395394129247190799265943165784,
            0.679409568299024406234327365114874,
            0.865063366688984510732096688423493,
            0.973906528517171720077964012084452,
        ];
        const W: [f64; 5] = [
            0.295524224714752870173892994651338,
            0.269266719309996355091226921569469,
            0.219086362515982043995534934228163,
            0.149451349150580593145776339657697,
            0.066671344308688137593568124754071,
        ];
        let h = b / panels as f64;
        let mut total = 0.0;
        for i in 0..panels {
            let c = (i as f64 + 0.5) * h;
            for k in 0..5 {
                let d = 0.5 * h * X[k];
                total += 0.5 * h * W[k] * (f(c - d) + f(c + d));
            }
        }
        total
    }

    #[test]
    fn values_at_zero() {
        for p in [1.2, 1.5, 2.0, 3.0] {
            assert_eq!(phi_p_prime(0.0, p), 1.0);
            assert_eq!(phi_p(0.0, p), 0.0);
        }
        assert_eq!(psi(0.0), 0.0);
        assert_eq!(psi_prime(0.0), 1.0);
    }

    #[test]
    fn phi_2_at_one_matches_oracle() {
        let oracle = gauss_legendre_in_s(|s| phi_p_prime(s, 2.0), 1.0, 200);
        assert_abs_diff_eq!(phi_p(1.0, 2.0), oracle, epsilon = 1e-10);
        assert_abs_diff_eq!(phi_p_quadrature(1.0, 2.0), oracle, epsilon = 1e-10);
    }

    #[test]
    fn psi_and_phi_match_oracle_on_wider_range() {
        for &s in &[0.3, 2.0, 17.0, 250.0] {
            let oracle = gauss_legendre_in_s(psi_prime, s, 4000);
            assert_abs_diff_eq!(psi(s), oracle, epsilon = 1e-9 * (1.0 + oracle));
            let oracle = gauss_legendre_in_s(|t| phi_p_prime(t, 1.5), s, 4000);
            assert_abs_diff_eq!(phi_p(s, 1.5), oracle, epsilon = 1e-9 * (1.0 + oracle));
        }
    }

    #[test]
    fn cached_and_uncached_agree() {
        for p in [1.5, 1.8, 2.0] {
            for k in -40..=40 {
                let s = (k as f64 * 0.37).sinh() * 1.3;
                let a = phi_p(s, p);
                let b = phi_p_quadrature(s, p);
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "p={p} s={s}: {a} vs {b}");
            }
        }
        for k in -40..=40 {
            let s = (k as f64 * 0.41).sinh();
            assert!((psi(s) - psi_quadrature(s)).abs() <= 1e-12 * (1.0 + psi(s).abs()));
        }
        // beyond the table
        let s = 1e20f64;
        assert!((phi_p(s, 2.0) - phi_p_quadrature(s, 2.0)).abs() <= 1e-10 * phi_p(s, 2.0));
    }

    #[test]
    fn psi_sup_bounds_psi() {
        let sup: f64 = psi_sup();
        assert!(sup.is_finite() && sup > 0.0);
        // psi'(s) ~ 1/(4 s log^2 s): the remaining mass beyond s is ~ 1/(4 log s)
        let s = 1e12f64;
        let remaining = sup - psi(s);
        let predicted = 1.0 / (4.0 * s.ln());
        assert!(remaining > 0.0);
        assert!((remaining - predicted).abs() < 0.1 * predicted, "{remaining} vs {predicted}");
        // relative accuracy against an independent summation of the tail
        let tail = quadrature::integrate(|w| integrand(w, 1.0), 0.0, 200.0, 1e-14, 0.0)
            + 1.0 / (4.0 * (200.0 - 2f64.ln())); // int_W^inf dw / (2w - ln 4)^2
        assert!((tail - sup).abs() < 1e-6 * sup, "{tail} vs {sup}");
    }

    #[test]
    fn derivative_ordering_and_oddness() {
        for p in [1.3, 2.0, 2.7] {
            for k in -100..=100 {
                let s = k as f64 * 0.173;
                let d = phi_p_prime(s, p);
                assert!(d > 0.0 && d <= 1.0);
                assert!(psi_prime(s) <= d + 1e-15);
                assert_eq!(phi_p(-s, p), -phi_p(s, p));
                assert_eq!(psi(-s), -psi(s));
                assert!(phi_p(s + 0.173, p) > phi_p(s, p));
            }
        }
    }

    #[test]
    fn single_precision_evaluation() {
        let v: f32 = phi_p(1.0f32, 2.0f32);
        assert!((v as f64 - phi_p(1.0f64, 2.0)).abs() < 1e-6);
    }
}

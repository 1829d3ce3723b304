//! Sampling audit of the structure conditions on `(a, b)`.
//!
//! Nothing here is a proof: the audit evaluates the inequalities at Latin
//! hypercube samples and reports worst margins and the offending samples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, sub, Real, Vec2};
use crate::structural::field::CoefficientField;

#[derive(Debug, Clone)]
pub struct AuditPlan<T> {
    pub samples: usize,
    /// `[x_min, x_max] x [y_min, y_max]`.
    pub x_box: [[T; 2]; 2],
    /// `log10` range of `|s|`, `|xi|` and `|eta|`.
    pub log10_range: [T; 2],
    /// Scales `tau_k` probing the asymptotic limit.
    pub tau_sequence: Vec<T>,
    pub seed: u64,
}

impl<T: Real> Default for AuditPlan<T> {
    fn default() -> Self {
        AuditPlan {
            samples: 512,
            x_box: [[T::zero(), T::one()], [T::zero(), T::one()]],
            log10_range: [T::lit(-3.0), T::lit(3.0)],
            tau_sequence: vec![T::lit(10.0), T::lit(100.0), T::lit(1000.0)],
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Coercivity,
    FluxGrowth,
    SourceGrowth,
    Monotonicity,
    AsymptoticCoercivity,
    AsymptoticMonotonicity,
    Homogeneity,
    Oddness,
}

#[derive(Debug, Clone, Copy)]
pub struct AuditPoint<T> {
    pub x: Vec2<T>,
    pub s: T,
    pub xi: Vec2<T>,
    pub eta: Vec2<T>,
}

#[derive(Debug, Clone)]
pub struct Violation<T> {
    pub condition: Condition,
    pub point: AuditPoint<T>,
    pub margin: T,
}

#[derive(Debug, Clone)]
pub struct AuditReport<T> {
    pub samples: usize,
    /// `min a.xi - nu |xi|^p + alpha0`.
    pub coercivity_margin: T,
    /// `min alpha1 + beta |xi|^{p-1} - |a|`.
    pub flux_growth_margin: T,
    /// `min alpha2 + beta |s|^r + beta |xi|^q - |b|`.
    pub source_growth_margin: T,
    /// `min (a(xi) - a(eta)).(xi - eta)`.
    pub monotonicity_margin: T,
    /// `max |a(tau xi)/tau^{p-1} - a_inf(xi)| + |b(..)/tau^{p-1} - b_inf(..)|` per `tau_k`.
    pub asymptotic_residuals: Option<Vec<T>>,
    pub homogeneity_residual: Option<T>,
    pub oddness_residual: Option<T>,
    pub violations: Vec<Violation<T>>,
}

impl<T: Real> AuditReport<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, c: Condition) -> usize {
        self.violations.iter().filter(|v| v.condition == c).count()
    }
}

/// Latin hypercube sample of `n` points in `[0, 1)^d`.
fn latin_hypercube(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    for k in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            pts[i][k] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    pts
}

fn polar<T: Real>(mag: T, angle: T) -> Vec2<T> {
    [mag * angle.cos(), mag * angle.sin()]
}

// Relative slack allowed for rounding in the inequality checks.
fn rounding<T: Real>(scale: T) -> T {
    T::lit(1e-10) * (T::one() + scale.abs())
}

pub fn audit_structure<T: Real>(field: &CoefficientField<T>, plan: &AuditPlan<T>) -> Result<AuditReport<T>> {
    if plan.samples == 0 {
        return Err(Error::invalid("audit plan needs at least one sample"));
    }
    let g = &field.growth;
    let p = g.p;
    let pm1 = p - T::one();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let lhs = latin_hypercube(plan.samples, 10, &mut rng);
    let [lo, hi] = plan.log10_range;
    let ten = T::lit(10.0);
    let two_pi = T::lit(2.0) * T::PI();

    let mut points: Vec<AuditPoint<T>> = lhs
        .iter()
        .map(|u| {
            let u: Vec<T> = u.iter().map(|&v| T::lit(v)).collect();
            let x = [
                plan.x_box[0][0] + u[0] * (plan.x_box[0][1] - plan.x_box[0][0]),
                plan.x_box[1][0] + u[1] * (plan.x_box[1][1] - plan.x_box[1][0]),
            ];
            let s_mag = ten.powf(lo + u[2] * (hi - lo));
            let s = if u[3] < T::lit(0.5) { -s_mag } else { s_mag };
            let xi = polar(ten.powf(lo + u[4] * (hi - lo)), two_pi * u[5]);
            let eta = polar(ten.powf(lo + u[6] * (hi - lo)), two_pi * u[7]);
            AuditPoint { x, s, xi, eta }
        })
        .collect();
    // Deterministic probes at the origin of xi and s.
    let centre = [
        (plan.x_box[0][0] + plan.x_box[0][1]) * T::lit(0.5),
        (plan.x_box[1][0] + plan.x_box[1][1]) * T::lit(0.5),
    ];
    points.push(AuditPoint { x: centre, s: T::zero(), xi: [T::zero(); 2], eta: [T::one(), T::zero()] });

    let mut report = AuditReport {
        samples: points.len(),
        coercivity_margin: T::infinity(),
        flux_growth_margin: T::infinity(),
        source_growth_margin: T::infinity(),
        monotonicity_margin: T::infinity(),
        asymptotic_residuals: None,
        homogeneity_residual: None,
        oddness_residual: None,
        violations: Vec::new(),
    };
    let flag = |violations: &mut Vec<Violation<T>>, condition, point: &AuditPoint<T>, margin: T, scale: T| {
        if margin < -rounding(scale) {
            violations.push(Violation { condition, point: *point, margin });
        }
    };

    for pt in &points {
        let a = field.a.eval(&pt.x, &pt.xi);
        let xi_n = norm(&pt.xi);
        let xi_p = xi_n.powf(p);
        let a0 = g.alpha0.eval(&pt.x);
        let m = dot(&a, &pt.xi) - g.nu * xi_p + a0;
        report.coercivity_margin = report.coercivity_margin.min(m);
        flag(&mut report.violations, Condition::Coercivity, pt, m, xi_p);

        let m = g.alpha1.eval(&pt.x) + g.beta * xi_n.powf(pm1) - norm(&a);
        report.flux_growth_margin = report.flux_growth_margin.min(m);
        flag(&mut report.violations, Condition::FluxGrowth, pt, m, norm(&a));

        let b = field.b.eval(&pt.x, pt.s, &pt.xi);
        let m = g.alpha2.eval(&pt.x) + g.beta * pt.s.abs().powf(g.r) + g.beta * xi_n.powf(g.q) - b.abs();
        report.source_growth_margin = report.source_growth_margin.min(m);
        flag(&mut report.violations, Condition::SourceGrowth, pt, m, b);

        let ae = field.a.eval(&pt.x, &pt.eta);
        let d = sub(&pt.xi, &pt.eta);
        let m = dot(&sub(&a, &ae), &d);
        report.monotonicity_margin = report.monotonicity_margin.min(m);
        if !(m > T::zero()) && norm(&d) > T::zero() {
            report.violations.push(Violation { condition: Condition::Monotonicity, point: *pt, margin: m });
        }
    }

    if let Some(asym) = &field.asymptotics {
        let mut residuals = Vec::with_capacity(plan.tau_sequence.len());
        for &tau in &plan.tau_sequence {
            let scale = tau.powf(pm1);
            let mut worst = T::zero();
            for pt in &points {
                let ai = asym.a.eval(&pt.x, &pt.xi);
                let at = field.a.eval(&pt.x, &[tau * pt.xi[0], tau * pt.xi[1]]);
                let ra = norm(&[at[0] / scale - ai[0], at[1] / scale - ai[1]]) / (T::one() + norm(&ai));
                let bi = asym.b.eval(&pt.x, pt.s, &pt.xi);
                let bt = field.b.eval(&pt.x, tau * pt.s, &[tau * pt.xi[0], tau * pt.xi[1]]);
                let rb = (bt / scale - bi).abs() / (T::one() + bi.abs());
                worst = worst.max(ra + rb);
            }
            residuals.push(worst);
        }
        report.asymptotic_residuals = Some(residuals);

        let mut hom = T::zero();
        let mut odd = T::zero();
        for pt in &points {
            let ai = asym.a.eval(&pt.x, &pt.xi);
            let m = dot(&ai, &pt.xi) - g.nu * norm(&pt.xi).powf(p);
            flag(&mut report.violations, Condition::AsymptoticCoercivity, pt, m, norm(&pt.xi).powf(p));
            let ae = asym.a.eval(&pt.x, &pt.eta);
            let d = sub(&pt.xi, &pt.eta);
            let m = dot(&sub(&ai, &ae), &d);
            if !(m > T::zero()) && norm(&d) > T::zero() {
                report.violations.push(Violation { condition: Condition::AsymptoticMonotonicity, point: *pt, margin: m });
            }
            let bi = asym.b.eval(&pt.x, pt.s, &pt.xi);
            for &tau in &[T::lit(0.5), T::lit(3.0)] {
                let f = tau.powf(pm1);
                let at = asym.a.eval(&pt.x, &[tau * pt.xi[0], tau * pt.xi[1]]);
                let bt = asym.b.eval(&pt.x, tau * pt.s, &[tau * pt.xi[0], tau * pt.xi[1]]);
                let r = norm(&[at[0] - f * ai[0], at[1] - f * ai[1]]) / (T::one() + f * norm(&ai))
                    + (bt - f * bi).abs() / (T::one() + f * bi.abs());
                hom = hom.max(r);
                if r > T::lit(1e-10) {
                    report.violations.push(Violation { condition: Condition::Homogeneity, point: *pt, margin: -r });
                }
            }
            if field.odd_asymptotics {
                let an = asym.a.eval(&pt.x, &[-pt.xi[0], -pt.xi[1]]);
                let bn = asym.b.eval(&pt.x, -pt.s, &[-pt.xi[0], -pt.xi[1]]);
                let r = norm(&[an[0] + ai[0], an[1] + ai[1]]) / (T::one() + norm(&ai))
                    + (bn + bi).abs() / (T::one() + bi.abs());
                odd = odd.max(r);
                if r > T::lit(1e-10) {
                    report.violations.push(Violation { condition: Condition::Oddness, point: *pt, margin: -r });
                }
            }
        }
        report.homogeneity_residual = Some(hom);
        if field.odd_asymptotics {
            report.oddness_residual = Some(odd);
        }
    }
    Ok(report)
}

//! Coefficient fields, structure audits, truncations and the `phi_p`/`psi`
//! change of variables.

pub mod audit;
pub mod field;
pub mod phi;
pub mod truncation;

pub use audit::{audit_structure, AuditPlan, AuditReport, Condition, Violation};
pub use field::{
    scaling_homotopy, truncation_homotopy, Asymptotics, CoefficientField, DataFn, Flux, GrowthData,
    HomotopyFamily, HomotopyKind, Source,
};
pub use phi::{phi_p, phi_p_prime, phi_p_quadrature, psi, psi_prime, psi_quadrature, psi_sup};
pub use truncation::{truncate_thk, truncate_tk};

use crate::error::Result;
use crate::grid::FeFunction;
use crate::scalar::Real;

/// Nodal composition `phi_p(u)` re-interpolated in P1.
pub fn phi_compose<T: Real>(u: &FeFunction<T>, p: T) -> FeFunction<T> {
    u.map(|v| phi_p(v, p))
}

/// `int |grad phi_p(u_h)|^p`, with the composition applied nodally.
pub fn phi_norm<T: Real>(u: &FeFunction<T>, p: T) -> T {
    phi_compose(u, p).grad_p_integral(p)
}

/// `d(u, v) = || grad phi_p(u) - grad phi_p(v) ||_p`.
pub fn phi_metric<T: Real>(u: &FeFunction<T>, v: &FeFunction<T>, p: T) -> Result<T> {
    u.check_same_mesh(v)?;
    let diff = u.zip_map(v, |a, b| phi_p(a, p) - phi_p(b, p))?;
    Ok(diff.grad_p_norm(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mesh;
    use std::sync::Arc;

    #[test]
    fn metric_axioms_on_samples() {
        let m = Arc::new(Mesh::<f64>::unit_square(6).unwrap());
        let u = FeFunction::interpolate_zero_bc(&m, |x| 5.0 * (x[0] * 7.0).sin() * x[1]);
        let v = FeFunction::interpolate_zero_bc(&m, |x| -3.0 * x[0] * x[0] + x[1]);
        let z = FeFunction::zeros(&m);
        assert_eq!(phi_metric(&u, &u, 1.5).unwrap(), 0.0);
        assert_eq!(phi_metric(&u, &v, 1.5).unwrap(), phi_metric(&v, &u, 1.5).unwrap());
        let d0 = phi_metric(&u, &z, 1.5).unwrap();
        assert!((d0 - phi_compose(&u, 1.5).grad_p_norm(1.5)).abs() < 1e-14);
        let other = Arc::new(Mesh::<f64>::unit_square(6).unwrap());
        assert!(phi_metric(&u, &FeFunction::zeros(&other), 2.0).is_err());
    }
}

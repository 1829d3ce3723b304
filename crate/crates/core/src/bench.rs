//! Built-in benchmark problems used by the verification studies.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::Result;
use crate::grid::Mesh;
use crate::measures::{DensityExpr, MeasureData};
use crate::structural::field::{ArctanReaction, DataFn, ZeroSource};
use crate::structural::CoefficientField;

/// Regularization used for the degenerate (`p != 2`) benchmarks.
pub const BENCH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFamily {
    /// Unit disk in `R^2` reduced to the radius.
    Disk,
    UnitSquare,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: &'static str,
    pub family: MeshFamily,
    pub levels: [usize; 3],
    pub field: CoefficientField<f64>,
    pub mu: MeasureData<f64>,
    /// Exact radial profile `u(r)` when known.
    pub exact: Option<fn(f64) -> f64>,
}

impl Benchmark {
    pub fn mesh(&self, n: usize) -> Result<Arc<Mesh<f64>>> {
        Ok(Arc::new(match self.family {
            MeshFamily::Disk => Mesh::radial(2, 1.0, n)?,
            MeshFamily::UnitSquare => Mesh::unit_square(n)?,
        }))
    }

    pub fn meshes(&self) -> Result<Vec<Arc<Mesh<f64>>>> {
        self.levels.iter().map(|&n| self.mesh(n)).collect()
    }

    pub fn p(&self) -> f64 {
        self.field.p()
    }
}

fn inv_r() -> DensityExpr<f64> {
    DensityExpr::RadialPower { exponent: 1.0, center: [0.0, 0.0], coefficient: 1.0 }
}

/// Exact radial profile for `f = 1`: `u(r) = int_r^1 (s/2)^{1/(p-1)} ds`.
pub fn radial_unit_load_profile(p: f64, r: f64) -> f64 {
    let k = 1.0 / (p - 1.0);
    2f64.powf(-k) * (1.0 - r.powf(k + 1.0)) / (k + 1.0)
}

fn p15_profile(r: f64) -> f64 {
    radial_unit_load_profile(1.5, r)
}

/// The eight benchmark problems.
pub fn suite() -> Vec<Benchmark> {
    let disk = [32, 64, 128];
    let square = [8, 16, 32];
    let mut atan = CoefficientField::p_laplacian(2.0, 0.0)
        .with_source(Arc::new(ArctanReaction { c: 1.0 }), Some(Arc::new(ZeroSource)));
    atan.growth.alpha2 = DataFn::Constant(PI / 2.0);
    vec![
        Benchmark {
            name: "disk_p2_const4",
            family: MeshFamily::Disk,
            levels: disk,
            field: CoefficientField::p_laplacian(2.0, 0.0),
            mu: MeasureData::density(DensityExpr::Constant(4.0)),
            exact: Some(|r| 1.0 - r * r),
        },
        Benchmark {
            name: "disk_p1.5_const1",
            family: MeshFamily::Disk,
            levels: disk,
            field: CoefficientField::p_laplacian(1.5, BENCH_EPS),
            mu: MeasureData::density(DensityExpr::Constant(1.0)),
            exact: Some(p15_profile),
        },
        Benchmark {
            name: "disk_p2_inv_r",
            family: MeshFamily::Disk,
            levels: disk,
            field: CoefficientField::p_laplacian(2.0, 0.0),
            mu: MeasureData::density_in_lm(inv_r(), 1.9),
            exact: Some(|r| 1.0 - r),
        },
        Benchmark {
            name: "disk_p1.8_inv_r",
            family: MeshFamily::Disk,
            levels: disk,
            field: CoefficientField::p_laplacian(1.8, BENCH_EPS),
            mu: MeasureData::density_in_lm(inv_r(), 1.9),
            exact: Some(|r| 1.0 - r),
        },
        Benchmark {
            name: "square_p2_const1",
            family: MeshFamily::UnitSquare,
            levels: square,
            field: CoefficientField::p_laplacian(2.0, 0.0),
            mu: MeasureData::density(DensityExpr::Constant(1.0)),
            exact: None,
        },
        Benchmark {
            name: "square_p1.5_const1",
            family: MeshFamily::UnitSquare,
            levels: square,
            field: CoefficientField::p_laplacian(1.5, BENCH_EPS),
            mu: MeasureData::density(DensityExpr::Constant(1.0)),
            exact: None,
        },
        Benchmark {
            name: "square_p2_line_charge",
            family: MeshFamily::UnitSquare,
            levels: square,
            field: CoefficientField::p_laplacian(2.0, 0.0),
            mu: MeasureData::line_charge([0.25, 0.5], [0.75, 0.5], [1.0, 1.0], 2.0, 2).expect("admissible"),
            exact: None,
        },
        Benchmark {
            name: "square_p2_atan_eigenmode",
            family: MeshFamily::UnitSquare,
            levels: square,
            field: atan,
            mu: MeasureData::density(DensityExpr::FirstEigenmode { amplitude: 10.0 }),
            exact: None,
        },
    ]
}

pub fn by_name(name: &str) -> Option<Benchmark> {
    suite().into_iter().find(|b| b.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structural::{audit_structure, AuditPlan};

    #[test]
    fn suite_is_complete_and_well_posed() {
        let s = suite();
        assert_eq!(s.len(), 8);
        for b in &s {
            b.field.growth.validate(2).unwrap();
            let mut plan = AuditPlan::default();
            plan.samples = 64;
            assert!(audit_structure(&b.field, &plan).unwrap().violations.is_empty(), "{}", b.name);
            assert_eq!(b.meshes().unwrap().len(), 3);
        }
        assert!(by_name("disk_p2_inv_r").is_some());
    }

    #[test]
    fn unit_load_profile_solves_radial_ode() {
        // -(r |u'|^{p-2} u')' / r = 1 with u(1) = 0, checked by differences
        let p = 1.5;
        let u = |r: f64| radial_unit_load_profile(p, r);
        let flux = |r: f64| {
            let h = 1e-5;
            let du = (u(r + h) - u(r - h)) / (2.0 * h);
            r * du.abs().powf(p - 2.0) * du
        };
        for r in [0.2, 0.5, 0.8] {
            let h = 1e-3;
            let lhs = -(flux(r + h) - flux(r - h)) / (2.0 * h) / r;
            assert!((lhs - 1.0).abs() < 1e-4, "{lhs}");
        }
        assert_eq!(u(1.0), 0.0);
    }
}

//! Finite-element workbench for quasilinear elliptic problems with measure
//! right-hand sides: entropy solutions by truncation and mollification,
//! Fredholm continuation, finite-dimensional degree, and property checks.
//!
//! Mesh, field and solver code is generic over [`scalar::Real`]; the aliases
//! below fix the scalar type.

pub mod bench;
pub mod continuation;
pub mod degree;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod measures;
pub mod quadrature;
pub mod report;
pub mod scalar;
pub mod solve;
pub mod structural;
pub mod verify;

pub use error::{Error, Result};

pub type Mesh64 = grid::Mesh<f64>;
pub type FeFunction64 = grid::FeFunction<f64>;
pub type Field64 = structural::CoefficientField<f64>;
pub type Measure64 = measures::MeasureData<f64>;
pub type Solution64 = solve::EntropySolution<f64>;

pub type Mesh32 = grid::Mesh<f32>;
pub type FeFunction32 = grid::FeFunction<f32>;
pub type Field32 = structural::CoefficientField<f32>;
pub type Measure32 = measures::MeasureData<f32>;
pub type Solution32 = solve::EntropySolution<f32>;

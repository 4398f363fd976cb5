//! Numerical toolkit for a damped wave–plate equation with a memory nonlinearity:
//! fractional calculus in time and space, critical exponents, a pseudospectral
//! solver and the test-function scaling machinery.
//!
//! Every numerical routine is generic over [`Real`] (`f32`, `f64`); the aliases
//! below fix `f64` for everyday use.

pub mod error;
pub mod exponents;
pub mod frac_space;
pub mod frac_time;
pub mod nonexistence_probe;
pub mod params;
pub mod quad;
pub mod scalar;
pub mod solver;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TimeMesh = frac_time::TimeMesh<f64>;
pub type SampledFn = frac_time::SampledFn<f64>;
pub type FracOrder = frac_time::FracOrder<f64>;
pub type CutoffParams = frac_time::CutoffParams<f64>;
pub type FracParams = params::FracParams<f64>;
pub type ExponentInputs = exponents::ExponentInputs<f64>;
pub type ExponentReport = exponents::ExponentReport<f64>;
pub type SpaceGrid = frac_space::SpaceGrid<f64>;
pub type Field = frac_space::Field<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;

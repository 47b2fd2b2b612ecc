//! Time-parallel solver for linear initial value problems `u' = A u + b`
//! based on an alpha-circulant preconditioned Richardson iteration over
//! composite Gauss–Radau collocation steps.

pub mod collocation;
pub mod driver;
pub mod error;
pub mod krylov;
pub mod linalg;
pub mod poly;
pub mod problems;
pub mod runtime;
pub mod schedule;
pub mod solver;
pub mod spectral;

pub use error::{PintError, Result};

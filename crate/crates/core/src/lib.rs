//! Exact reduced dynamics and thermodynamics of a bosonic mode linearly
//! coupled to a harmonic continuum.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod coefficients;
pub mod driving;
pub mod dynamics;
pub mod error;
pub mod green;
pub mod grid;
pub mod oracle;
pub mod quad;
pub mod rcmap;
pub mod spectral;
pub mod steady;
pub mod thermo;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use num_complex::Complex64;

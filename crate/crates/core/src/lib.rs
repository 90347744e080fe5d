//! Layered one-dimensional Helmholtz problems with impedance boundary
//! conditions: structured solvers, recursion quantities and stability bounds.

// Input checks are written as `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod batch;
pub mod bounds;
pub mod config;
pub mod configgen;
mod dd;
pub mod error;
pub mod format;
pub mod linalg;
pub mod medium;
pub mod qrec;
pub mod solver;
pub mod tolerances;

pub use error::{Error, Result};
pub use linalg::C64;
pub use medium::{derive_params, DerivedParams, LayeredMedium, ProblemInstance};
pub use tolerances::Tolerances;

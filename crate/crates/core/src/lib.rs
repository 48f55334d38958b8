//! Numerical laboratory for the Fibonacci trace map on its invariant cubic
//! surfaces.

// NaN must fail the positivity and ordering checks, which the negated forms express directly
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cantor;
pub mod defaults;
pub mod error;
pub mod horseshoe;
pub mod io;
pub mod manifolds;
pub mod maps;
pub mod orbits;
pub mod periodic;
pub mod surface;

pub use error::{Error, Result};
pub use maps::{Matrix3, Point3, TorusPoint};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuum;
pub mod error;
pub mod green;
pub mod lattice;
pub mod measures;
pub mod renorm;
pub mod run;
pub mod scenario;
pub mod sparse;
pub mod stochastic;

pub use error::{Error, Result};

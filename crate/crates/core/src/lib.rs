//! Numerical objects of variational ergodic theory on finite measure spaces:
//! q-variation norms and jump counts, mixed lattice norms, averaging
//! operators, analytic matrix semigroups and their square functions, and an
//! experiment engine estimating the constants of the associated inequalities.

// `!(x > 0.0)` is the NaN-rejecting form used throughout input validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod fixtures;
pub mod lab;
pub mod lattice;
pub mod operators;
pub mod quadrature;
pub mod variation;
pub mod weights;

pub use error::{Result, VarlabError};
pub use exec::Execution;
pub use lattice::{LatticeFamily, LatticeFunction, MeasureSpace};
pub use variation::{jump_count, vq_norm, ScalarSequence};

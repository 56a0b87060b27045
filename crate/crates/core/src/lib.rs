//! Generalised Bernoulli–Laplace urn chains: exact kernels, stationary laws,
//! chain transforms, spectral quantities, mixing curves and Monte Carlo
//! experiments.

// Matrix code indexes several arrays per loop, and `!(x > 0.0)` is the
// deliberate NaN-rejecting form of every range check.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exact;
pub mod kernels;
pub mod linalg;
pub mod montecarlo;
pub mod perms;
pub mod statespace;

pub use error::{Error, Result};

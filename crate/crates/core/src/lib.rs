//! Langevin MCMC for potentials that are smooth everywhere and strongly
//! convex outside a ball, plus the coupling machinery used to check their
//! convergence empirically.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod coupling_sim;
pub mod discretization_lab;
pub mod distance_fn;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod overdamped;
pub mod persist;
pub mod potentials;
pub mod quadrature;
pub mod rng;
pub mod underdamped;
pub mod vector;

pub use distance_fn::{DistanceFn, DistanceFnParams};
pub use error::{Error, Result};
pub use potentials::{Benchmark, Constants, Potential, PotentialSpec};

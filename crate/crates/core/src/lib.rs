//! Numerical core for entropy-penalized Gibbs chains on `[0, 1]` and their
//! zero-temperature limits.
//!
//! A potential `A(x, y)` is discretized on a uniform grid. The crate builds the
//! leading eigenpair of the transfer operators at inverse temperature `beta`,
//! the stationary Markov chain made from it, and the max-plus objects that
//! appear as `beta -> infinity`: the maximal cycle mean `m`, calibrated
//! subactions, the Mane potential and Peierls barrier, the non-wandering set,
//! and the large-deviation rate on cylinders.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
// NaN-rejecting comparisons are spelled as negations on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod math;

pub mod error;
pub mod gibbs;
pub mod grid;
pub mod ldp;
pub mod mane;
pub mod maximizer;
pub mod potentials;
pub mod transfer;
pub mod tropical;

pub use error::{Error, Result};
pub use grid::Grid;
pub use potentials::{Builtin, Perturbation, Polynomial, Potential};

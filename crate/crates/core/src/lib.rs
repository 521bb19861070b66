//! Learning dynamics and equilibrium analysis for two-player continuous games
//! with a leader and a follower.
//!
//! The crate is organized around a [`GameOracle`](oracle::GameOracle) that
//! exposes costs, block gradients and second-order vector products. On top of
//! it sit matrix-free linear algebra ([`opalg`]), discrete learning rules
//! ([`dynamics`]), critical-point search and classification ([`equilibria`]),
//! and a set of analytic benchmark games ([`games`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod equilibria;
mod error;
pub mod games;
pub mod opalg;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub use oracle::{BlockDims, GameOracle, JointPoint, Player};

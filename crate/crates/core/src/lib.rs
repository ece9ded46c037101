//! Distributed optimization over networks with nonlinear consensus.
//!
//! Nodes hold local copies of a shared decision vector, take local
//! successive-convex-approximation or gradient steps, and agree through a
//! consensus operator: linear averaging, quasi-arithmetic (transform) means,
//! max/min, or selections from shrunk convex and cube hulls of the
//! neighborhood.

pub mod consensus;
pub mod error;
pub mod graph;
pub mod harness;
pub mod objectives;
pub mod optimizers;
pub mod rng;
pub mod transforms;

pub use error::{Error, Result};

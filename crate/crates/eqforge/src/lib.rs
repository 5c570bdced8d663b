//! Numerical laboratory for equilibrium states of hyperbolic torus maps.
//!
//! The crate constructs leaf-supported reference measures, pushes them
//! forward, averages them, and estimates topological pressure by several
//! independent routes (partition sums on expanding leaves, spanning and
//! separated sets, and a transfer-operator discretization). Auxiliary
//! modules check the contraction and covering hypotheses the construction
//! relies on.

pub mod cocycle;
pub mod conditions;
pub mod config;
pub mod error;
pub mod leaf;
pub mod measures;
pub mod output;
pub mod pressure;
pub mod systems;

pub use error::{EqError, Result};

//! Weighted norm inequalities for multilinear maximal and sparse operators
//! on finite dyadic trees.
//!
//! The crate evaluates both sides of each inequality on concrete weighted
//! grids and tracks the ratio, so that implied constants can be monitored
//! across random and adversarial weight families.

// Negated comparisons such as `!(p > 0.0)` are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characteristics;
pub mod checkers;
pub mod error;
pub mod grid;
pub mod logspace;
pub mod operators;
pub mod search;
pub mod sparse;
pub mod stopping;
pub mod suite;

pub use error::{Error, Result};
pub use grid::{CubeId, CubeSeq, Grid, LeafFn};

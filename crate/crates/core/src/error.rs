use thiserror::Error;

use crate::grid::CubeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cube {0} is not part of a grid of depth {1}")]
    InvalidCube(CubeId, u32),

    #[error("cube {0} is not a leaf")]
    NotLeaf(CubeId),

    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("value at position {index} is negative or not finite: {value}")]
    NegativeValue { index: usize, value: f64 },

    #[error("weight must be strictly positive, found {value} at position {index}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("grid depth {0} is out of the supported range 0..=24")]
    DepthOutOfRange(u32),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error(
        "infeasible allocation at cube {cube}: {missing} of budget {budget} could not be placed"
    )]
    Infeasible {
        cube: CubeId,
        budget: f64,
        missing: f64,
    },

    #[error("Carleson norm {norm} exceeds {bound} (attained at cube {cube})")]
    CarlesonExceeded { norm: f64, bound: f64, cube: CubeId },

    #[error("hard failure in {case}: rhs vanishes but lhs = {lhs}")]
    HardFailure { case: String, lhs: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

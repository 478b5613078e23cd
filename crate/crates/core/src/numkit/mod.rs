//! Dense matrices, a reverse-mode autodiff tape, and a finite-difference
//! gradient checker.

mod gradcheck;
mod matrix;
mod sparse;
mod tape;

pub use gradcheck::{grad_check, GradCheck};
pub use matrix::{dot, norm, sigmoid, squared_distance, Matrix};
pub use sparse::SparsePattern;
pub use tape::{Gradients, ParamId, Tape, ValueId};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("op #{op_index} ({op}): shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op_index: usize,
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("op #{op_index} ({op}): expected {nnz} stored entries, got shape {got:?}")]
    PatternMismatch {
        op_index: usize,
        op: &'static str,
        nnz: usize,
        got: (usize, usize),
    },
    #[error("op #{op_index} ({op}): index {index} out of range for length {len}")]
    IndexOutOfRange {
        op_index: usize,
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("op #{op_index} ({op}): empty input")]
    EmptyInput { op_index: usize, op: &'static str },
    #[error("op #{op_index} ({op}) produced a non-finite value")]
    NonFinite { op_index: usize, op: &'static str },
    #[error("backward root must be 1x1, got {0:?}")]
    NonScalarRoot((usize, usize)),
    #[error("value #{0} is not recorded on this tape")]
    UnknownValue(usize),
    #[error("parameter id {0} registered twice")]
    DuplicateParam(usize),
}

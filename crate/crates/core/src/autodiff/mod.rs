//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records each operation as it is evaluated. [`Tape::backward`]
//! then walks the record once in reverse, accumulating gradients into every
//! value that was created with [`Tape::param`] or depends on one.

mod adam;
pub mod checkpoint;
mod tape;
mod tensor;

pub use adam::{adam_step, Adam, AdamState};
pub use tape::{count_triplets, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {a:?} and {b:?}")]
    Shape {
        op: &'static str,
        a: [usize; 2],
        b: [usize; 2],
    },
    #[error("{op}: range {start}..{end} out of bounds for shape {shape:?}")]
    Range {
        op: &'static str,
        shape: [usize; 2],
        start: usize,
        end: usize,
    },
    #[error("{op}: row {index} out of bounds for shape {shape:?}")]
    Index {
        op: &'static str,
        shape: [usize; 2],
        index: usize,
    },
    #[error("data of length {len} does not fit shape {shape:?}")]
    DataLength { shape: [usize; 2], len: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Self {
        TensorError::Shape { op, a, b }
    }
}

//! Minimal dense-tensor reverse-mode automatic differentiation.
//!
//! Build a computation on a [`Tape`], call [`Tape::backward`] on a scalar
//! loss, then read gradients back per [`Var`]:
//!
//! ```
//! use graphcl_autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.leaf(Tensor::row_vector(&[1.0, 2.0, 3.0]));
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```

pub mod checkpoint;
mod error;
pub mod gradcheck;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError, NamedTensor, TensorData};
pub use error::{AutodiffError, Result};
pub use gradcheck::{finite_diff_check, relative_error, Coordinate, GradCheckReport};
pub use tape::{Tape, Var};
pub use tensor::{DType, Real, Tensor};

//! Reverse-mode differentiation over a small set of vector ops.
//!
//! The op set covers exactly what the monotone network and its loss need:
//! element-wise arithmetic with scalar broadcast, matrix-vector products,
//! `tanh`/`sigmoid`/`hardsigmoid`/`softplus`/`log`, and reductions.
//!
//! ```
//! use monocif::autodiff::Tape;
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.scalar_input(2.0);
//! let y = tape.scalar_input(3.0);
//! let z = tape.mul(x, y).unwrap();
//! let grad = tape.backward(z).unwrap();
//! assert_eq!(grad.scalar(x), 3.0);
//! assert_eq!(grad.scalar(y), 2.0);
//! ```

mod check;
mod tape;

pub use check::{central_difference, finite_diff_check, gradient_at};
pub(crate) use tape::{hardsigmoid, sigmoid, softplus};
pub use tape::{Gradient, Op, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible operand lengths {left} and {right}")]
    Shape { op: &'static str, left: usize, right: usize },
    #[error("{op}: argument {value} outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("node {0} does not precede its consumer on this tape")]
    UnknownNode(usize),
    #[error("node {0} is not a leaf")]
    NotALeaf(usize),
    #[error("backward needs a scalar output, got length {0}")]
    NotScalar(usize),
}

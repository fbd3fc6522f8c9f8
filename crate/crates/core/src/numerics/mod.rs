//! Dense `f64` matrices, a reverse-mode tape and a finite-difference checker.
//!
//! Softmax is always taken along rows. For label attention the score matrix
//! is `labels x tokens`, so each label gets a distribution over tokens.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{finite_diff_check, numeric_gradient, relative_error, GradEntry, GradReport};
pub use matrix::{sigmoid, Matrix};
pub(crate) use matrix::dot;
pub use tape::{CustomOp, Gradients, NodeId, Tape};

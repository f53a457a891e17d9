//! Dense tensors, reverse-mode differentiation and a finite-difference oracle.

pub mod finite_diff;
pub mod tape;
pub mod tensor;

pub use tape::{Tape, Var};
pub use tensor::{Tensor, EPS_NORM};

//! Dense tensors and a reverse-mode gradient tape.
//!
//! Values live on a [`Tape`] as they are computed; [`Tape::backward`] replays
//! the recorded operations in reverse. Trainable parameters are ordinary
//! [`Tensor`]s that are copied onto a fresh tape each forward pass and receive
//! their gradients through [`Tape::accumulate_into`].

mod optim;
mod sparse;
mod tape;
mod tensor;

pub use optim::{Adam, AdamConfig};
pub use sparse::{SparseMatrix, SparsePattern};
pub use tape::{sigmoid, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{dot, matmul_raw, norm2};

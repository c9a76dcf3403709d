//! Dense-tensor engine: tensors, reverse-mode differentiation, Adam, and
//! the crate-wide deterministic RNG.

pub mod adam;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use rng::DetRng;
pub use tape::{finite_difference_check, Grads, Tape, Var};
pub use tensor::Tensor;

//! Dense tensors, deterministic random streams and a reverse-mode tape.

mod gradcheck;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use rng::{Rng, Stream};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

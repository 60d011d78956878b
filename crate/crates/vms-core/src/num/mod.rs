//! Minimal dense-array substrate: shapes, elementwise ops, matrix multiply,
//! slicing, reversal, concatenation, a fixed deterministic RNG, and the
//! container serialization format. Everything the other modules compute with.

pub mod array;
pub mod io;
pub mod rng;
pub mod scalar;

pub use array::{matmul, reverse_seq, Array};
pub use rng::Rng;
pub use scalar::{sigmoid, silu, silu_prime, softplus, softplus_inv, tanh};

//! Sequence-modeling kernels built around zero-order-hold state-space scans:
//! selective (input-dependent) scans with hand-derived reverse-mode gradients,
//! the Mamba / ViM / DBM token-mixing blocks, tanh-gated temporal adapters,
//! space-time and multimodal token layouts, and a CPU scaling benchmark that
//! contrasts the linear-time scan against a quadratic attention reference.
//!
//! Everything computes in `f64`; a 32-bit storage mode exists only inside the
//! benchmark kernels (with 64-bit accumulation). Arrays are immutable after
//! construction and all operations are pure functions, so concurrent reads of
//! shared inputs and parameters are safe.

pub mod bench;
pub mod blocks;
pub mod error;
pub mod layout;
pub mod num;
pub mod oracle;
pub mod ssm;

pub use error::{Error, Result};
pub use num::array::Array;
pub use num::rng::Rng;

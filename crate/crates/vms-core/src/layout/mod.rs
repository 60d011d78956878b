//! Token-sequence construction: space-time flattening with a mid-frame cls
//! token and zero-init temporal position embeddings, plus the four joint
//! video/text arrangements and their inverses.

pub mod multimodal;
pub mod spacetime;

pub use multimodal::{
    arrange_multimodal, extract_video, ArrangementKind, ModalityEmbeddings, MultiModalArrangement,
};
pub use spacetime::{flatten_spacetime, pool_cls, TokenLayout, VideoTokens};

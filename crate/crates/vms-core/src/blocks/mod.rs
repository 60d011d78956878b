//! Sequence-mixing blocks: a gated single-direction scan block, a
//! bidirectional variant with shared projections, a decomposed
//! bidirectional variant with half-width streams, plus the residual
//! adapters, parameter-count audits, and the config-driven constructor
//! shared by the CLI and FFI surfaces.

pub mod adapter;
pub mod config;
pub mod count;
pub mod dbm;
pub mod linear;
pub mod mamba;
pub mod vim;

pub use adapter::{Adapter, AdapterStyle};
pub use config::{build_block, Block, BlockConfig, BlockKind};
pub use count::{
    attention_slot_params, check_ratio, count_dbm, count_mamba, count_vim, vim_temporal_budget,
    BudgetReport, ParamCounts,
};
pub use dbm::DbmBlock;
pub use linear::{CausalConv1d, Linear};
pub use mamba::MambaBlock;
pub use vim::VimBlock;

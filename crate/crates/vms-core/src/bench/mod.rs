//! Measurement and evaluation surface: generic-precision kernels, wall-time
//! scaling sweeps with analytic memory gating, log-log slope fits, parameter
//! audits, a toy training loop, and golden regression vectors. Everything is
//! deterministic given a seed; only wall-clock timings vary between runs.

pub mod attention;
pub mod audit;
pub mod golden;
pub mod kernels;
pub mod slopes;
pub mod sweep;
pub mod train;

pub use attention::attention_naive;
pub use audit::{default_audit_configs, default_budget_widths, param_audit, render_audit, AuditReport, AuditRow};
pub use golden::{golden_generate, golden_verify, render_report, GoldenReport, FORMAT_VERSION, TOLERANCE};
pub use kernels::{AttentionKernel, BenchScalar, DbmKernel, MambaKernel, ScanKernel, VimKernel};
pub use slopes::{fit_slopes, render_fits, SlopeFit, MIN_OCTAVES, MIN_POINTS};
pub use sweep::{
    doubling_frames, records_from_csv, records_to_csv, run_sweep, BenchRecord, Dtype, Operator,
    RowStatus, SweepConfig, CSV_HEADER,
};
pub use train::{loss_csv, toy_train, TrainConfig, TrainResult};

//! State-space scan core: zero-order-hold discretization, the sequential
//! recurrence, the time-invariant convolutional kernel form, the selective
//! (input-dependent) scan with a chunked variant, and hand-derived
//! reverse-mode gradients for the selective scan.

pub mod backward;
pub mod discretize;
pub mod kernel;
pub mod selective;

pub use backward::{selective_scan_backward, SsmGrads};
pub use discretize::{combine_input, discretize_zoh, scan_recurrent, BInput, DiscreteSsm, ScanState};
pub use kernel::{conv_apply, kernel_conv, LtiSystem};
pub use selective::{
    dt_rank_heuristic, selective_scan, selective_scan_chunked, selective_scan_with_state,
    SsmParams,
};

//! C ABI over the block library. Handles are opaque pointers owned by the
//! caller and released with [`vms_block_free`]; every fallible call returns
//! a [`VmsStatus`] and leaves a thread-local message readable through
//! [`vms_last_error_message`]. All entry points catch panics, so no unwind
//! ever crosses the FFI boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use vms_core::blocks::{build_block, Block, BlockConfig};
use vms_core::{Array, Error};

/// Result of a C API call. Anything but `Ok` leaves a message in
/// [`vms_last_error_message`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Config, shape, or value validation failed.
    InvalidArgument = 2,
    /// The computation produced or detected invalid numbers.
    NumericFailure = 3,
    /// An internal panic was caught at the boundary.
    Panic = 4,
}

/// Opaque sequence-mixing block handle.
pub struct VmsBlock {
    inner: Block,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("NULs stripped above");
    });
}

fn status_of(err: &Error) -> VmsStatus {
    if err.exit_code() == 3 {
        VmsStatus::NumericFailure
    } else {
        VmsStatus::InvalidArgument
    }
}

fn catch_status(body: impl FnOnce() -> VmsStatus) -> VmsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic caught at the FFI boundary");
            VmsStatus::Panic
        }
    }
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the message of the most recent failure on this thread. The
/// pointer stays valid until the next failing call on the same thread.
/// Never null; empty string when no failure was recorded.
#[no_mangle]
pub extern "C" fn vms_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Builds a block from a JSON config, e.g.
/// `{"type":"vim","D":32,"E":2,"N":16,"conv_width":4,"seed":0}`
/// (`E`, `N`, `conv_width`, `seed` optional). Returns null on failure;
/// see [`vms_last_error_message`]. Release with [`vms_block_free`].
///
/// # Safety
/// `config_json` must be a valid NUL-terminated UTF-8 string or null.
#[no_mangle]
pub unsafe extern "C" fn vms_block_new(config_json: *const c_char) -> *mut VmsBlock {
    if config_json.is_null() {
        set_error("config_json is null");
        return std::ptr::null_mut();
    }
    let text = match CStr::from_ptr(config_json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("config_json is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    match catch_unwind(|| -> Result<Block, Error> { build_block(&BlockConfig::from_json(text)?) })
    {
        Ok(Ok(inner)) => Box::into_raw(Box::new(VmsBlock { inner })),
        Ok(Err(e)) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic caught at the FFI boundary");
            std::ptr::null_mut()
        }
    }
}

/// Releases a handle from [`vms_block_new`]. Null is a no-op.
///
/// # Safety
/// `block` must be a pointer returned by [`vms_block_new`] that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn vms_block_free(block: *mut VmsBlock) {
    if !block.is_null() {
        drop(Box::from_raw(block));
    }
}

/// Model width D of the block; 0 for a null handle.
///
/// # Safety
/// `block` must be null or a live handle from [`vms_block_new`].
#[no_mangle]
pub unsafe extern "C" fn vms_block_d_model(block: *const VmsBlock) -> usize {
    if block.is_null() {
        return 0;
    }
    (*block).inner.d_model()
}

/// Number of learnable scalars in the block; 0 for a null handle.
///
/// # Safety
/// `block` must be null or a live handle from [`vms_block_new`].
#[no_mangle]
pub unsafe extern "C" fn vms_block_param_len(block: *const VmsBlock) -> usize {
    if block.is_null() {
        return 0;
    }
    (*block).inner.param_len()
}

/// Runs the block over a sequence. `x` and `out` are row-major `[m, D]`
/// buffers of `m * vms_block_d_model(block)` doubles each; `out` is fully
/// written on `Ok` and untouched otherwise. Non-finite inputs are rejected.
///
/// # Safety
/// `block` must be a live handle; `x` and `out` must be valid for
/// `m * vms_block_d_model(block)` doubles (reads and writes respectively)
/// and must not overlap.
#[no_mangle]
pub unsafe extern "C" fn vms_block_forward(
    block: *const VmsBlock,
    x: *const f64,
    m: usize,
    out: *mut f64,
) -> VmsStatus {
    if block.is_null() || x.is_null() || out.is_null() {
        set_error("vms_block_forward: null argument");
        return VmsStatus::NullPointer;
    }
    let handle = &*block;
    let d = handle.inner.d_model();
    let input = std::slice::from_raw_parts(x, m * d).to_vec();
    let output = std::slice::from_raw_parts_mut(out, m * d);
    catch_status(|| {
        let run = || -> Result<Array, Error> {
            handle.inner.forward(&Array::from_vec(vec![m, d], input.clone())?)
        };
        match run() {
            Ok(y) => {
                output.copy_from_slice(y.data());
                VmsStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Reports the parameter census of the block: dense projection weights
/// (`static_weights`), scan-engaged weights counted once per engaged
/// direction (`dynamic_weights`), and bias/step scalars (`bias`). Output
/// pointers may be null to skip a field.
///
/// # Safety
/// `block` must be a live handle; each non-null output pointer must be
/// valid for one `u64` write.
#[no_mangle]
pub unsafe extern "C" fn vms_block_param_counts(
    block: *const VmsBlock,
    static_weights: *mut u64,
    dynamic_weights: *mut u64,
    bias: *mut u64,
) -> VmsStatus {
    if block.is_null() {
        set_error("vms_block_param_counts: null handle");
        return VmsStatus::NullPointer;
    }
    let counts = (*block).inner.count();
    if !static_weights.is_null() {
        *static_weights = counts.static_weights as u64;
    }
    if !dynamic_weights.is_null() {
        *dynamic_weights = counts.dynamic_weights as u64;
    }
    if !bias.is_null() {
        *bias = counts.bias as u64;
    }
    VmsStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = r#"{"type":"vim","D":8,"E":2,"N":4,"conv_width":4,"seed":3}"#;

    fn c_string(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn last_error() -> String {
        unsafe { CStr::from_ptr(vms_last_error_message()) }
            .to_string_lossy()
            .into_owned()
    }

    #[test]
    fn forward_matches_the_core_block() {
        let cfg = c_string(CFG);
        let handle = unsafe { vms_block_new(cfg.as_ptr()) };
        assert!(!handle.is_null(), "{}", last_error());
        let d = unsafe { vms_block_d_model(handle) };
        assert_eq!(d, 8);

        let m = 6;
        let x: Vec<f64> = (0..m * d).map(|i| ((i * 37 % 19) as f64 - 9.0) / 10.0).collect();
        let mut out = vec![0.0; m * d];
        let status = unsafe { vms_block_forward(handle, x.as_ptr(), m, out.as_mut_ptr()) };
        assert_eq!(status, VmsStatus::Ok);

        let core = build_block(&BlockConfig::from_json(CFG).unwrap()).unwrap();
        let expected = core.forward(&Array::from_vec(vec![m, d], x).unwrap()).unwrap();
        assert_eq!(out, expected.data());
        unsafe { vms_block_free(handle) };
    }

    #[test]
    fn bad_config_reports_through_last_error() {
        let cfg = c_string(r#"{"type":"warp","D":8}"#);
        let handle = unsafe { vms_block_new(cfg.as_ptr()) };
        assert!(handle.is_null());
        assert!(!last_error().is_empty());

        let odd = c_string(r#"{"type":"dbm","D":3,"E":1}"#);
        let handle = unsafe { vms_block_new(odd.as_ptr()) };
        assert!(handle.is_null());
        assert!(last_error().contains('3'), "{}", last_error());
    }

    #[test]
    fn null_arguments_are_rejected_not_crashed() {
        assert!(unsafe { vms_block_new(std::ptr::null()) }.is_null());
        assert_eq!(unsafe { vms_block_d_model(std::ptr::null()) }, 0);
        let status = unsafe {
            vms_block_forward(std::ptr::null(), std::ptr::null(), 4, std::ptr::null_mut())
        };
        assert_eq!(status, VmsStatus::NullPointer);
        unsafe { vms_block_free(std::ptr::null_mut()) };
    }

    #[test]
    fn non_finite_input_is_a_clean_error() {
        let cfg = c_string(CFG);
        let handle = unsafe { vms_block_new(cfg.as_ptr()) };
        let x = vec![f64::NAN; 8];
        let mut out = vec![0.0; 8];
        let status = unsafe { vms_block_forward(handle, x.as_ptr(), 1, out.as_mut_ptr()) };
        assert_eq!(status, VmsStatus::InvalidArgument);
        assert!(out.iter().all(|&v| v == 0.0), "out must stay untouched");
        unsafe { vms_block_free(handle) };
    }

    #[test]
    fn param_counts_match_the_audit() {
        let cfg = c_string(CFG);
        let handle = unsafe { vms_block_new(cfg.as_ptr()) };
        let (mut s, mut dy, mut b) = (0u64, 0u64, 0u64);
        let status = unsafe { vms_block_param_counts(handle, &mut s, &mut dy, &mut b) };
        assert_eq!(status, VmsStatus::Ok);
        let core = build_block(&BlockConfig::from_json(CFG).unwrap()).unwrap();
        let counts = core.count();
        assert_eq!(
            (s, dy, b),
            (
                counts.static_weights as u64,
                counts.dynamic_weights as u64,
                counts.bias as u64
            )
        );
        unsafe { vms_block_free(handle) };
    }

    #[test]
    fn version_is_a_readable_c_string() {
        let v = unsafe { CStr::from_ptr(vms_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}

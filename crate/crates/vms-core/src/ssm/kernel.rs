//! Convolutional-kernel form of a time-invariant discretized system. When
//! `a_bar`, `b_bar`, and `c` do not vary over time, the recurrence collapses
//! to a causal convolution with the structured kernel
//!
//! ```text
//! K[t, d] = sum_n c[d, n] * a_bar[d, n]^t * b_bar[d, n]
//! ```
//!
//! so `y = x * K` per channel. The kernel form is undefined for time-varying
//! parameters; [`LtiSystem::try_from_steps`] enforces that.

use crate::error::{Error, Result};
use crate::num::array::Array;

/// Time-invariant discretized system: `a_bar`, `b_bar`, `c` all `[D_inner, N]`.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    pub a_bar: Array,
    pub b_bar: Array,
    pub c: Array,
}

impl LtiSystem {
    pub fn new(a_bar: Array, b_bar: Array, c: Array) -> Result<LtiSystem> {
        if a_bar.ndim() != 2 || a_bar.shape() != b_bar.shape() || a_bar.shape() != c.shape() {
            return Err(Error::ShapeMismatch(format!(
                "LtiSystem wants three equal [D_inner, N] tensors, got {:?}, {:?}, {:?}",
                a_bar.shape(),
                b_bar.shape(),
                c.shape()
            )));
        }
        Ok(LtiSystem { a_bar, b_bar, c })
    }

    /// Collapses per-step tensors to the time-invariant form, failing with
    /// [`Error::TimeVaryingParams`] if any step differs from the first.
    /// `b_bar` here is the raw discretized B (input not folded in).
    pub fn try_from_steps(a_bar: &Array, b_bar: &Array, c: &Array) -> Result<LtiSystem> {
        for (name, t3) in [("a_bar", a_bar), ("b_bar", b_bar), ("c", c)] {
            if t3.ndim() != 3 {
                return Err(Error::ShapeMismatch(format!(
                    "try_from_steps: {name} must be [M, D_inner, N], got {:?}",
                    t3.shape()
                )));
            }
            let (m, d, n) = (t3.shape()[0], t3.shape()[1], t3.shape()[2]);
            if m == 0 {
                return Err(Error::TimeVaryingParams(format!(
                    "{name} has no steps to collapse"
                )));
            }
            let step = d * n;
            let first = &t3.data()[..step];
            for t in 1..m {
                if t3.data()[t * step..(t + 1) * step] != *first {
                    return Err(Error::TimeVaryingParams(format!(
                        "{name} differs between step 0 and step {t}"
                    )));
                }
            }
        }
        let (d, n) = (a_bar.shape()[1], a_bar.shape()[2]);
        LtiSystem::new(
            a_bar.slice_step(d, n),
            b_bar.slice_step(d, n),
            c.slice_step(d, n),
        )
    }

    pub fn d_inner(&self) -> usize {
        self.a_bar.shape()[0]
    }

    pub fn state_dim(&self) -> usize {
        self.a_bar.shape()[1]
    }
}

impl Array {
    /// First `[d, n]` step of a `[M, d, n]` tensor (helper for the collapse).
    fn slice_step(&self, d: usize, n: usize) -> Array {
        Array::from_vec_unchecked(vec![d, n], self.data()[..d * n].to_vec())
    }
}

/// Evaluates the structured kernel `K[t, d] = sum_n c * a_bar^t * b_bar` for
/// t in 0..M. Powers are built incrementally per (d, n) lane.
pub fn kernel_conv(sys: &LtiSystem, m: usize) -> Result<Array> {
    let (d, n) = (sys.d_inner(), sys.state_dim());
    let mut kernel = vec![0.0; m * d];
    let ab = sys.a_bar.data();
    let bb = sys.b_bar.data();
    let c = sys.c.data();
    for di in 0..d {
        // pow[n] tracks a_bar[d, n]^t across the t loop.
        let mut pow = vec![1.0; n];
        for t in 0..m {
            let mut acc = 0.0;
            for ni in 0..n {
                acc += c[di * n + ni] * pow[ni] * bb[di * n + ni];
                pow[ni] *= ab[di * n + ni];
            }
            kernel[t * d + di] = acc;
        }
    }
    Array::from_vec(vec![m, d], kernel)
}

/// Causal per-channel convolution `y[t, d] = sum_{s <= t} K[t - s, d] x[s, d]`.
pub fn conv_apply(kernel: &Array, x: &Array) -> Result<Array> {
    if kernel.ndim() != 2 || x.ndim() != 2 || kernel.shape() != x.shape() {
        return Err(Error::ShapeMismatch(format!(
            "conv_apply: kernel {:?} vs x {:?}",
            kernel.shape(),
            x.shape()
        )));
    }
    let (m, d) = (x.shape()[0], x.shape()[1]);
    let mut y = vec![0.0; m * d];
    for t in 0..m {
        for s in 0..=t {
            let k_row = &kernel.data()[(t - s) * d..(t - s + 1) * d];
            let x_row = &x.data()[s * d..(s + 1) * d];
            let y_row = &mut y[t * d..(t + 1) * d];
            for di in 0..d {
                y_row[di] += k_row[di] * x_row[di];
            }
        }
    }
    Array::from_vec(vec![m, d], y)
}

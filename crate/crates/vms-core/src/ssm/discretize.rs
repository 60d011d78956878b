//! Zero-order-hold discretization of a diagonal continuous system and the
//! exact sequential recurrence over the discretized steps.
//!
//! For a diagonal state matrix the discretization is elementwise: with step
//! delta and diagonal entry a < 0,
//!
//! ```text
//! a_bar = exp(delta * a)
//! b_bar = ((exp(delta * a) - 1) / a) * b
//! ```
//!
//! The `a -> 0` limit of `b_bar` is `delta * b`; the implementation switches
//! to that branch when `|delta * a| < 1e-8` to dodge the singular division.

use crate::error::{Error, Result};
use crate::num::array::Array;

/// B coefficients handed to [`discretize_zoh`]: either one `[D_inner, N]`
/// matrix reused at every step (the time-invariant case) or a `[M, D_inner,
/// N]` tensor with one matrix per step (the selective case). No broadcasting
/// happens anywhere: the per-step form must be materialized by the caller.
pub enum BInput<'a> {
    Constant(&'a Array),
    PerStep(&'a Array),
}

/// Discretized system over M steps: `a_bar` and `b_bar_x` are `[M, D_inner,
/// N]`, with the input already folded into `b_bar_x` (it stores `b_bar *
/// x_t`, see [`combine_input`]); `c` is `[M, D_inner, N]` readout
/// coefficients. Whenever delta > 0 and a < 0, every `a_bar` entry lies in
/// (0, 1) up to floating-point underflow at extremely negative `delta * a`.
#[derive(Debug, Clone)]
pub struct DiscreteSsm {
    pub a_bar: Array,
    pub b_bar_x: Array,
    pub c: Array,
}

impl DiscreteSsm {
    /// Validates shape agreement between the three tensors.
    pub fn new(a_bar: Array, b_bar_x: Array, c: Array) -> Result<DiscreteSsm> {
        if a_bar.ndim() != 3 || a_bar.shape() != b_bar_x.shape() || a_bar.shape() != c.shape() {
            return Err(Error::ShapeMismatch(format!(
                "DiscreteSsm wants three equal [M, D_inner, N] tensors, got {:?}, {:?}, {:?}",
                a_bar.shape(),
                b_bar_x.shape(),
                c.shape()
            )));
        }
        Ok(DiscreteSsm { a_bar, b_bar_x, c })
    }

    pub fn steps(&self) -> usize {
        self.a_bar.shape()[0]
    }

    pub fn d_inner(&self) -> usize {
        self.a_bar.shape()[1]
    }

    pub fn state_dim(&self) -> usize {
        self.a_bar.shape()[2]
    }
}

/// Hidden state of a scan: `[D_inner, N]`.
#[derive(Debug, Clone)]
pub struct ScanState {
    pub h: Array,
}

impl ScanState {
    pub fn zeros(d_inner: usize, n: usize) -> ScanState {
        ScanState {
            h: Array::zeros(vec![d_inner, n]),
        }
    }
}

/// Elementwise ZOH discretization of a diagonal system.
///
/// `a` is `[D_inner, N]` strictly negative, `delta` is `[M, D_inner]`
/// strictly positive, `b` is constant `[D_inner, N]` or per-step
/// `[M, D_inner, N]`. Returns `(a_bar, b_bar)` both `[M, D_inner, N]`;
/// fold in the input with [`combine_input`] to build a [`DiscreteSsm`].
pub fn discretize_zoh(a: &Array, b: &BInput, delta: &Array) -> Result<(Array, Array)> {
    if a.ndim() != 2 || delta.ndim() != 2 || delta.shape()[1] != a.shape()[0] {
        return Err(Error::ShapeMismatch(format!(
            "discretize_zoh: a {:?} vs delta {:?}",
            a.shape(),
            delta.shape()
        )));
    }
    let (m, d, n) = (delta.shape()[0], a.shape()[0], a.shape()[1]);
    match b {
        BInput::Constant(bc) if bc.shape() != a.shape() => {
            return Err(Error::ShapeMismatch(format!(
                "discretize_zoh: constant b {:?} vs a {:?}",
                bc.shape(),
                a.shape()
            )));
        }
        BInput::PerStep(bs) if bs.shape() != [m, d, n] => {
            return Err(Error::ShapeMismatch(format!(
                "discretize_zoh: per-step b {:?}, want {:?}",
                bs.shape(),
                [m, d, n]
            )));
        }
        _ => {}
    }
    for (i, &v) in a.data().iter().enumerate() {
        if v >= 0.0 {
            return Err(Error::NonNegativeA { index: i, value: v });
        }
    }
    for (i, &v) in delta.data().iter().enumerate() {
        if v <= 0.0 {
            return Err(Error::NonPositiveDelta { index: i, value: v });
        }
    }

    let mut a_bar = vec![0.0; m * d * n];
    let mut b_bar = vec![0.0; m * d * n];
    for t in 0..m {
        for di in 0..d {
            let dt = delta.data()[t * d + di];
            for ni in 0..n {
                let av = a.data()[di * n + ni];
                let bv = match b {
                    BInput::Constant(bc) => bc.data()[di * n + ni],
                    BInput::PerStep(bs) => bs.data()[(t * d + di) * n + ni],
                };
                let z = dt * av;
                let idx = (t * d + di) * n + ni;
                a_bar[idx] = z.exp();
                b_bar[idx] = if z.abs() < 1e-8 {
                    // a -> 0 limit of ((exp(delta a) - 1) / a) b.
                    dt * bv
                } else {
                    z.exp_m1() / av * bv
                };
            }
        }
    }
    Ok((
        Array::from_vec(vec![m, d, n], a_bar)?,
        Array::from_vec(vec![m, d, n], b_bar)?,
    ))
}

/// Folds the input sequence into the discretized B: `b_bar_x[t, d, n] =
/// b_bar[t, d, n] * x[t, d]`. Explicit materialization, no broadcasting.
pub fn combine_input(b_bar: &Array, x: &Array) -> Result<Array> {
    if b_bar.ndim() != 3 || x.ndim() != 2 || b_bar.shape()[0] != x.shape()[0] || b_bar.shape()[1] != x.shape()[1] {
        return Err(Error::ShapeMismatch(format!(
            "combine_input: b_bar {:?} vs x {:?}",
            b_bar.shape(),
            x.shape()
        )));
    }
    let (m, d, n) = (b_bar.shape()[0], b_bar.shape()[1], b_bar.shape()[2]);
    let mut out = vec![0.0; m * d * n];
    for t in 0..m {
        for di in 0..d {
            let xv = x.data()[t * d + di];
            for ni in 0..n {
                let idx = (t * d + di) * n + ni;
                out[idx] = b_bar.data()[idx] * xv;
            }
        }
    }
    Array::from_vec(vec![m, d, n], out)
}

/// Exact left-to-right recurrence `h_t = a_bar_t h_{t-1} + b_bar_x_t`,
/// `y_t[d] = sum_n c[t, d, n] h_t[d, n]`. Returns the outputs `[M, D_inner]`
/// and the final state. M = 0 returns an empty output and `h0` unchanged.
pub fn scan_recurrent(d: &DiscreteSsm, h0: &ScanState) -> Result<(Array, ScanState)> {
    let (m, di, n) = (d.steps(), d.d_inner(), d.state_dim());
    if h0.h.shape() != [di, n] {
        return Err(Error::ShapeMismatch(format!(
            "scan_recurrent: h0 {:?}, want {:?}",
            h0.h.shape(),
            [di, n]
        )));
    }
    h0.h.check_finite("scan_recurrent h0")?;
    let mut h = h0.h.data().to_vec();
    let mut y = vec![0.0; m * di];
    let ab = d.a_bar.data();
    let bx = d.b_bar_x.data();
    let c = d.c.data();
    for t in 0..m {
        for dd in 0..di {
            let base = (t * di + dd) * n;
            let hrow = &mut h[dd * n..(dd + 1) * n];
            let mut acc = 0.0;
            for ni in 0..n {
                hrow[ni] = ab[base + ni] * hrow[ni] + bx[base + ni];
                acc += c[base + ni] * hrow[ni];
            }
            y[t * di + dd] = acc;
        }
    }
    let y = Array::from_vec(vec![m, di], y)?;
    let h = Array::from_vec(vec![di, n], h)?;
    Ok((y, ScanState { h }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::Rng;
    use crate::oracle;

    #[test]
    fn scalar_closed_form() {
        let a = Array::from_vec(vec![1, 1], vec![-1.0]).unwrap();
        let b = Array::from_vec(vec![1, 1], vec![1.0]).unwrap();
        let delta = Array::from_vec(vec![1, 1], vec![0.5]).unwrap();
        let (a_bar, b_bar) = discretize_zoh(&a, &BInput::Constant(&b), &delta).unwrap();
        assert!((a_bar.data()[0] - 0.606531).abs() < 1e-6);
        assert!((b_bar.data()[0] - 0.393469).abs() < 1e-6);
    }

    #[test]
    fn small_argument_limit() {
        // delta*a tiny: a_bar -> 1, b_bar -> delta * b.
        let a = Array::from_vec(vec![1, 1], vec![-1e-12]).unwrap();
        let b = Array::from_vec(vec![1, 1], vec![2.0]).unwrap();
        let delta = Array::from_vec(vec![1, 1], vec![0.25]).unwrap();
        let (a_bar, b_bar) = discretize_zoh(&a, &BInput::Constant(&b), &delta).unwrap();
        assert!((a_bar.data()[0] - 1.0).abs() < 1e-12);
        assert!((b_bar.data()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn matches_series_oracle() {
        let mut rng = Rng::new(11);
        for _ in 0..50 {
            let a_v = rng.uniform(-3.0, -0.05);
            let b_v = rng.uniform(-2.0, 2.0);
            let d_v = rng.uniform(1e-3, 1.0);
            let a = Array::from_vec(vec![1, 1], vec![a_v]).unwrap();
            let b = Array::from_vec(vec![1, 1], vec![b_v]).unwrap();
            let delta = Array::from_vec(vec![1, 1], vec![d_v]).unwrap();
            let (a_bar, b_bar) = discretize_zoh(&a, &BInput::Constant(&b), &delta).unwrap();
            let (a_ref, b_ref) = oracle::discretize_scalar_series(a_v, b_v, d_v, 30);
            assert!((a_bar.data()[0] - a_ref).abs() / a_ref.abs().max(1e-300) < 1e-12);
            assert!((b_bar.data()[0] - b_ref).abs() / b_ref.abs().max(1e-12) < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_signs() {
        let a_bad = Array::from_vec(vec![1, 1], vec![0.5]).unwrap();
        let a = Array::from_vec(vec![1, 1], vec![-1.0]).unwrap();
        let b = Array::from_vec(vec![1, 1], vec![1.0]).unwrap();
        let delta = Array::from_vec(vec![1, 1], vec![0.5]).unwrap();
        assert!(matches!(
            discretize_zoh(&a_bad, &BInput::Constant(&b), &delta),
            Err(Error::NonNegativeA { .. })
        ));
        let delta_bad = Array::from_vec(vec![1, 1], vec![0.0]).unwrap();
        assert!(matches!(
            discretize_zoh(&a, &BInput::Constant(&b), &delta_bad),
            Err(Error::NonPositiveDelta { .. })
        ));
    }

    #[test]
    fn frozen_state_recurrence() {
        // a_bar = 1, b_bar_x = 0: every output reads the initial state.
        let m = 4;
        let a_bar = Array::filled(vec![m, 1, 2], 1.0);
        let b_bar_x = Array::zeros(vec![m, 1, 2]);
        let c = {
            let mut v = vec![0.0; m * 2];
            for t in 0..m {
                v[t * 2] = 1.0;
            }
            Array::from_vec(vec![m, 1, 2], v).unwrap()
        };
        let d = DiscreteSsm::new(a_bar, b_bar_x, c).unwrap();
        let h0 = ScanState {
            h: Array::from_vec(vec![1, 2], vec![2.0, 3.0]).unwrap(),
        };
        let (y, h_final) = scan_recurrent(&d, &h0).unwrap();
        assert_eq!(y.data(), &[2.0, 2.0, 2.0, 2.0]);
        assert_eq!(h_final.h.data(), &[2.0, 3.0]);
    }

    #[test]
    fn empty_sequence() {
        let d = DiscreteSsm::new(
            Array::zeros(vec![0, 2, 3]),
            Array::zeros(vec![0, 2, 3]),
            Array::zeros(vec![0, 2, 3]),
        )
        .unwrap();
        let h0 = ScanState::zeros(2, 3);
        let (y, h) = scan_recurrent(&d, &h0).unwrap();
        assert_eq!(y.shape(), &[0, 2]);
        assert_eq!(h.h, h0.h);
    }

    #[test]
    fn scalar_chain() {
        // a_bar = 0.5, inputs (1, 0, 0), c = 1: y = (1, 0.5, 0.25).
        let a_bar = Array::filled(vec![3, 1, 1], 0.5);
        let b_bar_x = Array::from_vec(vec![3, 1, 1], vec![1.0, 0.0, 0.0]).unwrap();
        let c = Array::filled(vec![3, 1, 1], 1.0);
        let d = DiscreteSsm::new(a_bar, b_bar_x, c).unwrap();
        let (y, _) = scan_recurrent(&d, &ScanState::zeros(1, 1)).unwrap();
        assert_eq!(y.data(), &[1.0, 0.5, 0.25]);
    }

    #[test]
    fn a_bar_in_unit_interval_and_state_bounded() {
        let mut rng = Rng::new(5);
        let (m, d, n) = (40, 3, 4);
        let a = Array::from_vec(vec![d, n], rng.uniform_vec(d * n, -3.0, -0.05)).unwrap();
        let b = Array::from_vec(vec![d, n], rng.uniform_vec(d * n, -1.0, 1.0)).unwrap();
        let delta = Array::from_vec(vec![m, d], rng.uniform_vec(m * d, 1e-3, 1.0)).unwrap();
        let x = Array::from_vec(vec![m, d], rng.uniform_vec(m * d, -1.0, 1.0)).unwrap();
        let (a_bar, b_bar) = discretize_zoh(&a, &BInput::Constant(&b), &delta).unwrap();
        assert!(a_bar.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let b_bar_x = combine_input(&b_bar, &x).unwrap();
        let c = Array::filled(vec![m, d, n], 1.0);
        let max_bx = b_bar_x.max_abs();
        let dsys = DiscreteSsm::new(a_bar, b_bar_x, c).unwrap();
        let (_, h_final) = scan_recurrent(&dsys, &ScanState::zeros(d, n)).unwrap();
        // |h_t| <= |h_0| + M * max|b_bar_x| since every a_bar is in (0, 1).
        assert!(h_final.h.max_abs() <= (m as f64) * max_bx + 1e-12);
    }
}

//! Timing kernels, generic over the stored scalar. These are lean,
//! allocation-conscious re-implementations of the core operators used only
//! for measurement: they stream the scan with an explicit state buffer
//! instead of materializing per-step tensors, and they exist in f32 as well
//! as f64. Each kernel is cross-checked against its core counterpart in
//! this module's tests, and reports the bytes one run allocates so the
//! sweep can refuse over-budget points before touching memory.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::blocks::dbm::DbmBlock;
use crate::blocks::linear::{CausalConv1d, Linear};
use crate::blocks::mamba::MambaBlock;
use crate::blocks::vim::VimBlock;
use crate::num::array::Array;
use crate::ssm::selective::SsmParams;

/// Scalar a timing kernel can store and compute in natively.
pub trait BenchScalar:
    Copy
    + Send
    + Sync
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    const NAME: &'static str;
    const BYTES: usize;
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn exp_m1(self) -> Self;
    fn ln_1p(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
}

impl BenchScalar for f32 {
    const NAME: &'static str = "f32";
    const BYTES: usize = 4;
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn exp(self) -> Self {
        self.exp()
    }

    fn exp_m1(self) -> Self {
        self.exp_m1()
    }

    fn ln_1p(self) -> Self {
        self.ln_1p()
    }

    fn abs(self) -> Self {
        self.abs()
    }

    fn maximum(self, other: Self) -> Self {
        self.max(other)
    }
}

impl BenchScalar for f64 {
    const NAME: &'static str = "f64";
    const BYTES: usize = 8;
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn exp(self) -> Self {
        self.exp()
    }

    fn exp_m1(self) -> Self {
        self.exp_m1()
    }

    fn ln_1p(self) -> Self {
        self.ln_1p()
    }

    fn abs(self) -> Self {
        self.abs()
    }

    fn maximum(self, other: Self) -> Self {
        self.max(other)
    }
}

fn softplus_s<S: BenchScalar>(x: S) -> S {
    x.maximum(S::ZERO) + (-x.abs()).exp().ln_1p()
}

fn sigmoid_s<S: BenchScalar>(x: S) -> S {
    if x >= S::ZERO {
        S::ONE / (S::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::ONE + e)
    }
}

fn silu_s<S: BenchScalar>(x: S) -> S {
    x * sigmoid_s(x)
}

fn cast_vec<S: BenchScalar>(a: &Array) -> Vec<S> {
    a.data().iter().map(|&v| S::from_f64(v)).collect()
}

/// `y[t] = W x[t] + b` over `len` rows, W stored `[out, in]`.
fn linear_rows<S: BenchScalar>(w: &[S], b: &[S], out_dim: usize, in_dim: usize, x: &[S], len: usize, y: &mut [S]) {
    for t in 0..len {
        let xt = &x[t * in_dim..(t + 1) * in_dim];
        let yt = &mut y[t * out_dim..(t + 1) * out_dim];
        for i in 0..out_dim {
            let row = &w[i * in_dim..(i + 1) * in_dim];
            let mut acc = S::ZERO;
            for j in 0..in_dim {
                acc = acc + row[j] * xt[j];
            }
            yt[i] = acc + b[i];
        }
    }
}

/// Depthwise causal conv, kernel `[ch, width]`, left zero padding.
fn conv_rows<S: BenchScalar>(w: &[S], b: &[S], ch: usize, width: usize, x: &[S], len: usize, y: &mut [S]) {
    for t in 0..len {
        for c in 0..ch {
            let mut acc = S::ZERO;
            for k in 0..width {
                let src = t as isize - (width as isize - 1) + k as isize;
                if src >= 0 {
                    acc = acc + w[c * width + k] * x[src as usize * ch + c];
                }
            }
            y[t * ch + c] = acc + b[c];
        }
    }
}

fn reverse_rows<S: BenchScalar>(x: &mut [S], len: usize, width: usize) {
    for t in 0..len / 2 {
        let (a, b) = (t * width, (len - 1 - t) * width);
        for j in 0..width {
            x.swap(a + j, b + j);
        }
    }
}

/// Streaming selective scan: per token, project the step size, input gate,
/// and readout, then update the `[m, n]` state in place.
#[derive(Debug, Clone)]
pub struct ScanKernel<S> {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    a_log: Vec<S>,
    dt_down: Vec<S>,
    dt_up: Vec<S>,
    dt_bias: Vec<S>,
    b_proj: Vec<S>,
    b_bias: Vec<S>,
    c_proj: Vec<S>,
    c_bias: Vec<S>,
    d_skip: Vec<S>,
}

impl<S: BenchScalar> ScanKernel<S> {
    pub fn from_params(p: &SsmParams) -> ScanKernel<S> {
        ScanKernel {
            m: p.d_inner(),
            n: p.state_dim(),
            r: p.dt_rank(),
            a_log: cast_vec(&p.a_log),
            dt_down: cast_vec(&p.dt_down),
            dt_up: cast_vec(&p.dt_up),
            dt_bias: cast_vec(&p.dt_bias),
            b_proj: cast_vec(&p.b_proj),
            b_bias: cast_vec(&p.b_bias),
            c_proj: cast_vec(&p.c_proj),
            c_bias: cast_vec(&p.c_bias),
            d_skip: cast_vec(&p.d_skip),
        }
    }

    /// One run allocates the output, the state, and small per-token
    /// projection buffers; the input is counted once by the caller's side.
    pub fn bytes_peak(len: usize, m: usize, n: usize, r: usize) -> usize {
        (2 * len * m + m * n + m + 2 * n + r) * S::BYTES
    }

    pub fn run_with_state(&self, x: &[S], len: usize, h: &mut [S], y: &mut [S]) {
        let (m, n, r) = (self.m, self.n, self.r);
        let small = S::from_f64(1e-8);
        let mut low = vec![S::ZERO; r];
        let mut b_t = vec![S::ZERO; n];
        let mut c_t = vec![S::ZERO; n];
        let mut delta = vec![S::ZERO; m];
        for t in 0..len {
            let xt = &x[t * m..(t + 1) * m];
            for i in 0..r {
                let mut acc = S::ZERO;
                for d in 0..m {
                    acc = acc + self.dt_down[i * m + d] * xt[d];
                }
                low[i] = acc;
            }
            for d in 0..m {
                let mut acc = S::ZERO;
                for i in 0..r {
                    acc = acc + self.dt_up[d * r + i] * low[i];
                }
                delta[d] = softplus_s(acc + self.dt_bias[d]);
            }
            for ni in 0..n {
                let mut accb = S::ZERO;
                let mut accc = S::ZERO;
                for d in 0..m {
                    accb = accb + self.b_proj[ni * m + d] * xt[d];
                    accc = accc + self.c_proj[ni * m + d] * xt[d];
                }
                b_t[ni] = accb + self.b_bias[ni];
                c_t[ni] = accc + self.c_bias[ni];
            }
            for d in 0..m {
                let hrow = &mut h[d * n..(d + 1) * n];
                let mut acc = S::ZERO;
                for ni in 0..n {
                    let a = -self.a_log[d * n + ni].exp();
                    let z = delta[d] * a;
                    let a_bar = z.exp();
                    let phi = if z.abs() < small { delta[d] } else { z.exp_m1() / a };
                    hrow[ni] = a_bar * hrow[ni] + phi * b_t[ni] * xt[d];
                    acc = acc + c_t[ni] * hrow[ni];
                }
                y[t * m + d] = acc + self.d_skip[d] * xt[d];
            }
        }
    }

    pub fn run(&self, x: &[S], len: usize) -> Vec<S> {
        let mut y = vec![S::ZERO; len * self.m];
        let mut h = vec![S::ZERO; self.m * self.n];
        self.run_with_state(x, len, &mut h, &mut y);
        y
    }

    /// Same scan, state carried across fixed-size chunks.
    pub fn run_chunked(&self, x: &[S], len: usize, chunk: usize) -> Vec<S> {
        let mut y = vec![S::ZERO; len * self.m];
        let mut h = vec![S::ZERO; self.m * self.n];
        let mut start = 0;
        while start < len {
            let take = chunk.min(len - start);
            let (xs, ys) = (
                &x[start * self.m..(start + take) * self.m],
                &mut y[start * self.m..(start + take) * self.m],
            );
            self.run_with_state(xs, take, &mut h, ys);
            start += take;
        }
        y
    }
}

/// Full-score-matrix attention over `[len, d]` tokens.
#[derive(Debug, Clone)]
pub struct AttentionKernel<S> {
    pub d: usize,
    wq: Vec<S>,
    wk: Vec<S>,
    wv: Vec<S>,
    wo: Vec<S>,
}

impl<S: BenchScalar> AttentionKernel<S> {
    pub fn from_weights(wq: &Array, wk: &Array, wv: &Array, wo: &Array) -> AttentionKernel<S> {
        AttentionKernel {
            d: wq.shape()[0],
            wq: cast_vec(wq),
            wk: cast_vec(wk),
            wv: cast_vec(wv),
            wo: cast_vec(wo),
        }
    }

    /// q, k, v, the len x len score matrix, the mixed values, and the
    /// output.
    pub fn bytes_peak(len: usize, d: usize) -> usize {
        (len * len + 5 * len * d) * S::BYTES
    }

    pub fn run(&self, x: &[S], len: usize) -> Vec<S> {
        let d = self.d;
        let zero = vec![S::ZERO; d];
        let mut q = vec![S::ZERO; len * d];
        let mut k = vec![S::ZERO; len * d];
        let mut v = vec![S::ZERO; len * d];
        linear_rows(&self.wq, &zero, d, d, x, len, &mut q);
        linear_rows(&self.wk, &zero, d, d, x, len, &mut k);
        linear_rows(&self.wv, &zero, d, d, x, len, &mut v);
        let scale = S::from_f64(1.0 / (d as f64).sqrt());
        let mut scores = vec![S::ZERO; len * len];
        for i in 0..len {
            let qi = &q[i * d..(i + 1) * d];
            let row = &mut scores[i * len..(i + 1) * len];
            let mut max = S::from_f64(f64::NEG_INFINITY);
            for (j, slot) in row.iter_mut().enumerate() {
                let kj = &k[j * d..(j + 1) * d];
                let mut dot = S::ZERO;
                for e in 0..d {
                    dot = dot + qi[e] * kj[e];
                }
                *slot = dot * scale;
                max = max.maximum(*slot);
            }
            let mut denom = S::ZERO;
            for slot in row.iter_mut() {
                *slot = (*slot - max).exp();
                denom = denom + *slot;
            }
            for slot in row.iter_mut() {
                *slot = *slot / denom;
            }
        }
        let mut mixed = vec![S::ZERO; len * d];
        for i in 0..len {
            let row = &scores[i * len..(i + 1) * len];
            let out = &mut mixed[i * d..(i + 1) * d];
            for (j, &w) in row.iter().enumerate() {
                let vj = &v[j * d..(j + 1) * d];
                for e in 0..d {
                    out[e] = out[e] + w * vj[e];
                }
            }
        }
        let mut out = vec![S::ZERO; len * d];
        linear_rows(&self.wo, &zero, d, d, &mixed, len, &mut out);
        out
    }
}

#[derive(Debug, Clone)]
struct LinearKernel<S> {
    out_dim: usize,
    in_dim: usize,
    w: Vec<S>,
    b: Vec<S>,
}

impl<S: BenchScalar> LinearKernel<S> {
    fn from_linear(l: &Linear) -> LinearKernel<S> {
        LinearKernel {
            out_dim: l.out_dim(),
            in_dim: l.in_dim(),
            w: cast_vec(&l.w),
            b: cast_vec(&l.b),
        }
    }

    fn apply(&self, x: &[S], len: usize) -> Vec<S> {
        let mut y = vec![S::ZERO; len * self.out_dim];
        linear_rows(&self.w, &self.b, self.out_dim, self.in_dim, x, len, &mut y);
        y
    }
}

#[derive(Debug, Clone)]
struct ConvKernel<S> {
    ch: usize,
    width: usize,
    w: Vec<S>,
    b: Vec<S>,
}

impl<S: BenchScalar> ConvKernel<S> {
    fn from_conv(c: &CausalConv1d) -> ConvKernel<S> {
        ConvKernel {
            ch: c.channels(),
            width: c.width(),
            w: cast_vec(&c.w),
            b: cast_vec(&c.b),
        }
    }

    fn apply(&self, x: &[S], len: usize) -> Vec<S> {
        let mut y = vec![S::ZERO; len * self.ch];
        conv_rows(&self.w, &self.b, self.ch, self.width, x, len, &mut y);
        y
    }
}

fn split_cols<S: BenchScalar>(x: &[S], len: usize, width: usize, cols: std::ops::Range<usize>) -> Vec<S> {
    let w = cols.len();
    let mut out = vec![S::ZERO; len * w];
    for t in 0..len {
        out[t * w..(t + 1) * w].copy_from_slice(&x[t * width + cols.start..t * width + cols.end]);
    }
    out
}

#[derive(Debug, Clone)]
pub struct MambaKernel<S> {
    pub d: usize,
    pub e: usize,
    in_proj: LinearKernel<S>,
    conv: ConvKernel<S>,
    scan: ScanKernel<S>,
    out_proj: LinearKernel<S>,
}

impl<S: BenchScalar> MambaKernel<S> {
    pub fn from_block(b: &MambaBlock) -> MambaKernel<S> {
        MambaKernel {
            d: b.d,
            e: b.e,
            in_proj: LinearKernel::from_linear(&b.in_proj),
            conv: ConvKernel::from_conv(&b.conv),
            scan: ScanKernel::from_params(&b.ssm),
            out_proj: LinearKernel::from_linear(&b.out_proj),
        }
    }

    pub fn bytes_peak(len: usize, d: usize, e: usize, n: usize, r: usize) -> usize {
        let ed = e * d;
        // u0 + x_s + x_g + conv out + out, plus the scan's own buffers.
        (len * (2 * ed + 2 * ed + ed + d)) * S::BYTES + ScanKernel::<S>::bytes_peak(len, ed, n, r)
    }

    pub fn run(&self, x: &[S], len: usize) -> Vec<S> {
        let ed = self.e * self.d;
        let u0 = self.in_proj.apply(x, len);
        let xs = split_cols(&u0, len, 2 * ed, 0..ed);
        let mut xg = split_cols(&u0, len, 2 * ed, ed..2 * ed);
        let mut c = self.conv.apply(&xs, len);
        for v in c.iter_mut() {
            *v = silu_s(*v);
        }
        let mut y = self.scan.run(&c, len);
        for (slot, g) in y.iter_mut().zip(xg.iter_mut()) {
            *slot = *slot * silu_s(*g);
        }
        self.out_proj.apply(&y, len)
    }
}

#[derive(Debug, Clone)]
pub struct VimKernel<S> {
    pub d: usize,
    pub e: usize,
    in_proj: LinearKernel<S>,
    conv: ConvKernel<S>,
    scan_fwd: ScanKernel<S>,
    scan_bwd: ScanKernel<S>,
    out_proj: LinearKernel<S>,
}

impl<S: BenchScalar> VimKernel<S> {
    pub fn from_block(b: &VimBlock) -> VimKernel<S> {
        VimKernel {
            d: b.d,
            e: b.e,
            in_proj: LinearKernel::from_linear(&b.in_proj),
            conv: ConvKernel::from_conv(&b.conv),
            scan_fwd: ScanKernel::from_params(&b.ssm_fwd),
            scan_bwd: ScanKernel::from_params(&b.ssm_bwd),
            out_proj: LinearKernel::from_linear(&b.out_proj),
        }
    }

    pub fn bytes_peak(len: usize, d: usize, e: usize, n: usize, r: usize) -> usize {
        let ed = e * d;
        // u0, x_s, x_g, per-direction conv and scan outputs, reversed copy,
        // output, plus two scans' buffers.
        (len * (2 * ed + 2 * ed + 3 * ed + d)) * S::BYTES
            + 2 * ScanKernel::<S>::bytes_peak(len, ed, n, r)
    }

    pub fn run(&self, x: &[S], len: usize) -> Vec<S> {
        let ed = self.e * self.d;
        let u0 = self.in_proj.apply(x, len);
        let xs = split_cols(&u0, len, 2 * ed, 0..ed);
        let mut g = split_cols(&u0, len, 2 * ed, ed..2 * ed);
        for v in g.iter_mut() {
            *v = silu_s(*v);
        }
        let mut cf = self.conv.apply(&xs, len);
        for v in cf.iter_mut() {
            *v = silu_s(*v);
        }
        let yf = self.scan_fwd.run(&cf, len);
        let mut xr = xs.clone();
        reverse_rows(&mut xr, len, ed);
        let mut cb = self.conv.apply(&xr, len);
        for v in cb.iter_mut() {
            *v = silu_s(*v);
        }
        let mut yb = self.scan_bwd.run(&cb, len);
        reverse_rows(&mut yb, len, ed);
        let half = S::from_f64(0.5);
        let mut z = yf;
        for i in 0..z.len() {
            z[i] = (z[i] * g[i] + yb[i] * g[i]) * half;
        }
        self.out_proj.apply(&z, len)
    }
}

#[derive(Debug, Clone)]
pub struct DbmKernel<S> {
    pub d: usize,
    pub e: usize,
    in_proj: LinearKernel<S>,
    conv_fwd: ConvKernel<S>,
    conv_bwd: ConvKernel<S>,
    scan: ScanKernel<S>,
    out_proj: LinearKernel<S>,
}

impl<S: BenchScalar> DbmKernel<S> {
    pub fn from_block(b: &DbmBlock) -> DbmKernel<S> {
        DbmKernel {
            d: b.d,
            e: b.e,
            in_proj: LinearKernel::from_linear(&b.in_proj),
            conv_fwd: ConvKernel::from_conv(&b.conv_fwd),
            conv_bwd: ConvKernel::from_conv(&b.conv_bwd),
            scan: ScanKernel::from_params(&b.ssm),
            out_proj: LinearKernel::from_linear(&b.out_proj),
        }
    }

    pub fn bytes_peak(len: usize, d: usize, e: usize, n: usize, r: usize) -> usize {
        let ed = e * d;
        let h = ed / 2;
        // u0, four half-width streams, per-direction conv/scan outputs and
        // the reversed copy, concatenated gated features, output.
        (len * (2 * ed + 4 * h + 5 * h + ed + d)) * S::BYTES
            + 2 * ScanKernel::<S>::bytes_peak(len, h, n, r)
    }

    pub fn run(&self, x: &[S], len: usize) -> Vec<S> {
        let ed = self.e * self.d;
        let h = ed / 2;
        let u0 = self.in_proj.apply(x, len);
        let sf = split_cols(&u0, len, 2 * ed, 0..h);
        let gf = split_cols(&u0, len, 2 * ed, h..2 * h);
        let mut sb = split_cols(&u0, len, 2 * ed, 2 * h..3 * h);
        let gb = split_cols(&u0, len, 2 * ed, 3 * h..4 * h);
        let mut cf = self.conv_fwd.apply(&sf, len);
        for v in cf.iter_mut() {
            *v = silu_s(*v);
        }
        let yf = self.scan.run(&cf, len);
        reverse_rows(&mut sb, len, h);
        let mut cb = self.conv_bwd.apply(&sb, len);
        for v in cb.iter_mut() {
            *v = silu_s(*v);
        }
        let mut yb = self.scan.run(&cb, len);
        reverse_rows(&mut yb, len, h);
        let mut z = vec![S::ZERO; len * ed];
        for t in 0..len {
            for j in 0..h {
                z[t * ed + j] = yf[t * h + j] * silu_s(gf[t * h + j]);
                z[t * ed + h + j] = yb[t * h + j] * silu_s(gb[t * h + j]);
            }
        }
        self.out_proj.apply(&z, len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::attention::attention_naive;
    use crate::num::rng::Rng;
    use crate::oracle;
    use crate::ssm::selective::selective_scan;

    fn to_array(v: &[f64], shape: Vec<usize>) -> Array {
        Array::from_vec(shape, v.to_vec()).unwrap()
    }

    fn rel_err_slices(a: &[f64], b: &[f64]) -> f64 {
        oracle::rel_err_vec(a, b, 1e-300)
    }

    #[test]
    fn scan_kernel_matches_core_scan() {
        let mut rng = Rng::new(1);
        let p = SsmParams::init(6, 4, 2, &mut rng);
        let len = 20;
        let x = rng.uniform_vec(len * 6, -1.0, 1.0);
        let got = ScanKernel::<f64>::from_params(&p).run(&x, len);
        let want = selective_scan(&p, &to_array(&x, vec![len, 6])).unwrap();
        assert!(rel_err_slices(&got, want.data()) < 1e-12);
    }

    #[test]
    fn chunked_kernel_is_bitwise_equal() {
        let mut rng = Rng::new(2);
        let p = SsmParams::init(4, 3, 1, &mut rng);
        let len = 33;
        let x = rng.uniform_vec(len * 4, -1.0, 1.0);
        let k = ScanKernel::<f64>::from_params(&p);
        let whole = k.run(&x, len);
        for chunk in [1usize, 7, 16, 64] {
            let parts = k.run_chunked(&x, len, chunk);
            assert!(whole.iter().zip(&parts).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn f32_scan_tracks_f64_loosely() {
        let mut rng = Rng::new(3);
        let p = SsmParams::init(8, 4, 1, &mut rng);
        let len = 32;
        let x = rng.uniform_vec(len * 8, -1.0, 1.0);
        let lo: Vec<f64> = ScanKernel::<f32>::from_params(&p)
            .run(&x.iter().map(|&v| v as f32).collect::<Vec<_>>(), len)
            .iter()
            .map(|&v| v as f64)
            .collect();
        let hi = ScanKernel::<f64>::from_params(&p).run(&x, len);
        assert!(rel_err_slices(&lo, &hi) < 1e-3);
    }

    #[test]
    fn attention_kernel_matches_reference() {
        let mut rng = Rng::new(4);
        let d = 8;
        let bound = 1.0 / (d as f64).sqrt();
        let mats: Vec<Array> = (0..4)
            .map(|_| to_array(&rng.uniform_vec(d * d, -bound, bound), vec![d, d]))
            .collect();
        let len = 12;
        let x = rng.uniform_vec(len * d, -1.0, 1.0);
        let k = AttentionKernel::<f64>::from_weights(&mats[0], &mats[1], &mats[2], &mats[3]);
        let got = k.run(&x, len);
        let want = attention_naive(&to_array(&x, vec![len, d]), &mats[0], &mats[1], &mats[2], &mats[3]).unwrap();
        assert!(rel_err_slices(&got, want.data()) < 1e-12);
    }

    #[test]
    fn block_kernels_match_their_blocks() {
        let mut rng = Rng::new(5);
        let (d, e, n, w, len) = (8, 2, 4, 4, 16);
        let x = rng.uniform_vec(len * d, -1.0, 1.0);
        let xa = to_array(&x, vec![len, d]);

        let mb = MambaBlock::init(d, e, n, w, &mut rng).unwrap();
        let got = MambaKernel::<f64>::from_block(&mb).run(&x, len);
        assert!(rel_err_slices(&got, mb.forward(&xa).unwrap().data()) < 1e-12);

        let vb = VimBlock::init(d, e, n, w, &mut rng).unwrap();
        let got = VimKernel::<f64>::from_block(&vb).run(&x, len);
        assert!(rel_err_slices(&got, vb.forward(&xa).unwrap().data()) < 1e-12);

        let db = DbmBlock::init(d, e, n, w, &mut rng).unwrap();
        let got = DbmKernel::<f64>::from_block(&db).run(&x, len);
        assert!(rel_err_slices(&got, db.forward(&xa).unwrap().data()) < 1e-12);
    }

    #[test]
    fn f32_blocks_track_f64_within_drift_band() {
        let mut rng = Rng::new(6);
        let (d, e, n, w, len) = (8, 2, 4, 4, 16);
        let x64 = rng.uniform_vec(len * d, -1.0, 1.0);
        let x32: Vec<f32> = x64.iter().map(|&v| v as f32).collect();
        let mb = MambaBlock::init(d, e, n, w, &mut rng).unwrap();
        let lo: Vec<f64> = MambaKernel::<f32>::from_block(&mb)
            .run(&x32, len)
            .iter()
            .map(|&v| v as f64)
            .collect();
        let hi = MambaKernel::<f64>::from_block(&mb).run(&x64, len);
        assert!(rel_err_slices(&lo, &hi) < 1e-4);
    }

    #[test]
    fn attention_bytes_grow_quadratically() {
        let d = 32;
        let small = AttentionKernel::<f32>::bytes_peak(1000, d);
        let big = AttentionKernel::<f32>::bytes_peak(2000, d);
        assert!(big > 3 * small && big < 5 * small);
        assert!(AttentionKernel::<f32>::bytes_peak(25088, d) > (2usize << 30));
        // Scan bytes stay linear.
        let s_small = ScanKernel::<f32>::bytes_peak(1000, 64, 16, 2);
        let s_big = ScanKernel::<f32>::bytes_peak(2000, 64, 16, 2);
        assert!(s_big < 3 * s_small);
    }
}

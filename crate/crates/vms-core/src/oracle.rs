//! Brute-force reference implementations, written independently of the main
//! code paths and frozen before those paths existed. The test suite compares
//! the optimized implementations against these; nothing in here is called by
//! production code. Each function favors the most literal transcription of
//! its definition over any shared helper, so a bug in the main path cannot
//! hide in a helper both sides use.

use crate::num::array::Array;

/// Triple-loop matrix product, the most literal form possible.
pub fn matmul_naive(a: &Array, b: &Array) -> Array {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for kk in 0..k {
                acc += a.data()[i * k + kk] * b.data()[kk * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    Array::from_vec_unchecked(vec![m, n], out)
}

/// Truncated exponential series `sum_{k=0}^{terms} z^k / k!`. For negative z
/// the alternating terms cancel, so accuracy degrades with |z|; at 30 terms
/// the absolute error stays below ~1e-13 for |z| <= 3, which bounds the
/// sampling range the oracle-based tests use.
pub fn exp_series(z: f64, terms: usize) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..=terms {
        term *= z / k as f64;
        sum += term;
    }
    sum
}

/// Truncated series for `(e^z - 1) / z = sum_{k=0}^{terms} z^k / (k+1)!`,
/// which stays well-conditioned through z = 0.
pub fn expm1_over_z_series(z: f64, terms: usize) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..=terms {
        term *= z / (k + 1) as f64;
        sum += term;
    }
    sum
}

/// Zero-order-hold discretization of one scalar channel via the series
/// oracles: `a_bar = exp(delta*a)` and `b_bar = delta * b * (e^z - 1)/z`
/// with `z = delta * a`. Thirty terms hold rel err below 1e-12 for |z| <= 6.
pub fn discretize_scalar_series(a: f64, b: f64, delta: f64, terms: usize) -> (f64, f64) {
    let z = delta * a;
    (exp_series(z, terms), delta * b * expm1_over_z_series(z, terms))
}

/// Parameters for [`selective_scan_reference`], all plain slices so the
/// oracle shares no types with the main implementation beyond `Array`.
pub struct ReferenceScanParams<'a> {
    pub d_inner: usize,
    pub n: usize,
    pub dt_rank: usize,
    /// a_log `[d_inner, n]`; the state matrix is `A = -exp(a_log)`.
    pub a_log: &'a [f64],
    /// dt_down `[dt_rank, d_inner]`, no bias.
    pub dt_down: &'a [f64],
    /// dt_up `[d_inner, dt_rank]` with bias `dt_bias [d_inner]`.
    pub dt_up: &'a [f64],
    pub dt_bias: &'a [f64],
    /// b_proj `[n, d_inner]` with bias `b_bias [n]`.
    pub b_proj: &'a [f64],
    pub b_bias: &'a [f64],
    /// c_proj `[n, d_inner]` with bias `c_bias [n]`.
    pub c_proj: &'a [f64],
    pub c_bias: &'a [f64],
    /// Per-channel skip weights `[d_inner]`.
    pub d_skip: &'a [f64],
}

/// Literal per-step selective scan: for every time step, project delta/B/C
/// from the input token, discretize that step, advance the state, read out.
/// Written as one monolithic loop with scalar arithmetic only.
pub fn selective_scan_reference(p: &ReferenceScanParams, x: &Array) -> Array {
    let m = x.shape()[0];
    let d = p.d_inner;
    let n = p.n;
    let r = p.dt_rank;
    let xd = x.data();
    let mut h = vec![0.0; d * n];
    let mut y = vec![0.0; m * d];
    for t in 0..m {
        let xt = &xd[t * d..(t + 1) * d];
        // delta_t = softplus(dt_up . (dt_down . x_t) + dt_bias)
        let mut low = vec![0.0; r];
        for i in 0..r {
            for j in 0..d {
                low[i] += p.dt_down[i * d + j] * xt[j];
            }
        }
        let mut delta = vec![0.0; d];
        for i in 0..d {
            let mut q = p.dt_bias[i];
            for j in 0..r {
                q += p.dt_up[i * r + j] * low[j];
            }
            // softplus, overflow-safe
            delta[i] = q.max(0.0) + (-q.abs()).exp().ln_1p();
        }
        // B_t, C_t shared across channels
        let mut b_t = vec![0.0; n];
        let mut c_t = vec![0.0; n];
        for i in 0..n {
            let mut bb = p.b_bias[i];
            let mut cc = p.c_bias[i];
            for j in 0..d {
                bb += p.b_proj[i * d + j] * xt[j];
                cc += p.c_proj[i * d + j] * xt[j];
            }
            b_t[i] = bb;
            c_t[i] = cc;
        }
        // state update and readout
        for di in 0..d {
            let mut acc = 0.0;
            for ni in 0..n {
                let a = -p.a_log[di * n + ni].exp();
                let z = delta[di] * a;
                let a_bar = z.exp();
                let b_bar = if z.abs() < 1e-8 {
                    delta[di] * b_t[ni]
                } else {
                    (a_bar - 1.0) / a * b_t[ni]
                };
                let idx = di * n + ni;
                h[idx] = a_bar * h[idx] + b_bar * xt[di];
                acc += c_t[ni] * h[idx];
            }
            y[t * d + di] = acc + p.d_skip[di] * xt[di];
        }
    }
    Array::from_vec_unchecked(vec![m, d], y)
}

/// Direct-summation attention: per query row, accumulate the softmax
/// numerators term by term without any matrix algebra.
pub fn attention_direct(x: &Array, wq: &Array, wk: &Array, wv: &Array, wo: &Array) -> Array {
    let (m, d) = (x.shape()[0], x.shape()[1]);
    let proj = |w: &Array, row: &[f64]| -> Vec<f64> {
        // y = W . row with W stored [out, in]
        let out_dim = w.shape()[0];
        let in_dim = w.shape()[1];
        let mut y = vec![0.0; out_dim];
        for i in 0..out_dim {
            for j in 0..in_dim {
                y[i] += w.data()[i * in_dim + j] * row[j];
            }
        }
        y
    };
    let rows: Vec<&[f64]> = (0..m).map(|i| &x.data()[i * d..(i + 1) * d]).collect();
    let q: Vec<Vec<f64>> = rows.iter().map(|r| proj(wq, r)).collect();
    let k: Vec<Vec<f64>> = rows.iter().map(|r| proj(wk, r)).collect();
    let v: Vec<Vec<f64>> = rows.iter().map(|r| proj(wv, r)).collect();
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = vec![0.0; m * d];
    for i in 0..m {
        let mut scores = vec![0.0; m];
        for j in 0..m {
            let mut dot = 0.0;
            for e in 0..d {
                dot += q[i][e] * k[j][e];
            }
            scores[j] = dot * scale;
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            denom += *s;
        }
        let mut mixed = vec![0.0; d];
        for j in 0..m {
            let w = scores[j] / denom;
            for e in 0..d {
                mixed[e] += w * v[j][e];
            }
        }
        let projected = proj(wo, &mixed);
        out[i * d..(i + 1) * d].copy_from_slice(&projected);
    }
    Array::from_vec_unchecked(vec![m, d], out)
}

/// Weights of one gated-scan block for [`mamba_block_reference`], all plain
/// row-major slices.
pub struct ReferenceBlockWeights<'a> {
    pub d: usize,
    pub e: usize,
    pub conv_width: usize,
    /// `[2 e d, d]` and `[2 e d]`.
    pub in_w: &'a [f64],
    pub in_b: &'a [f64],
    /// `[e d, conv_width]` and `[e d]`.
    pub conv_w: &'a [f64],
    pub conv_b: &'a [f64],
    pub ssm: ReferenceScanParams<'a>,
    /// `[d, e d]` and `[d]`.
    pub out_w: &'a [f64],
    pub out_b: &'a [f64],
}

/// Literal per-token transcription of the gated-scan block: input projection
/// split into a scan stream and a gate stream, causal depthwise convolution,
/// silu, the reference selective scan, silu gating, output projection.
pub fn mamba_block_reference(w: &ReferenceBlockWeights, x: &Array) -> Array {
    let (m, d) = (x.shape()[0], w.d);
    let inner = w.e * w.d;
    let silu = |v: f64| v / (1.0 + (-v).exp());
    // Input projection, one token at a time.
    let mut xs = vec![0.0; m * inner];
    let mut xg = vec![0.0; m * inner];
    for t in 0..m {
        for o in 0..2 * inner {
            let mut acc = w.in_b[o];
            for j in 0..d {
                acc += w.in_w[o * d + j] * x.data()[t * d + j];
            }
            if o < inner {
                xs[t * inner + o] = acc;
            } else {
                xg[t * inner + (o - inner)] = acc;
            }
        }
    }
    // Causal depthwise conv then silu.
    let mut u = vec![0.0; m * inner];
    for t in 0..m {
        for c in 0..inner {
            let mut acc = w.conv_b[c];
            for k in 0..w.conv_width {
                let s = t as isize - (w.conv_width as isize - 1) + k as isize;
                if s >= 0 {
                    acc += w.conv_w[c * w.conv_width + k] * xs[s as usize * inner + c];
                }
            }
            u[t * inner + c] = silu(acc);
        }
    }
    let y_s = selective_scan_reference(&w.ssm, &Array::from_vec_unchecked(vec![m, inner], u));
    // Gate and project out.
    let mut out = vec![0.0; m * d];
    for t in 0..m {
        let mut z = vec![0.0; inner];
        for c in 0..inner {
            z[c] = y_s.data()[t * inner + c] * silu(xg[t * inner + c]);
        }
        for o in 0..d {
            let mut acc = w.out_b[o];
            for c in 0..inner {
                acc += w.out_w[o * inner + c] * z[c];
            }
            out[t * d + o] = acc;
        }
    }
    Array::from_vec_unchecked(vec![m, d], out)
}

/// Central finite-difference gradient of a scalar function: component i gets
/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
pub fn finite_difference_grad(f: impl Fn(&[f64]) -> f64, point: &[f64], eps: f64) -> Vec<f64> {
    let mut grads = Vec::with_capacity(point.len());
    let mut work = point.to_vec();
    for i in 0..point.len() {
        work[i] = point[i] + eps;
        let plus = f(&work);
        work[i] = point[i] - eps;
        let minus = f(&work);
        work[i] = point[i];
        grads.push((plus - minus) / (2.0 * eps));
    }
    grads
}

/// Relative error between two vectors under the max norm:
/// `max_i |a_i - b_i| / max(max|a|, max|b|, floor)`. The floor keeps the
/// ratio defined when both sides vanish (then the error is 0 by convention).
pub fn rel_err_vec(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut diff = 0.0f64;
    let mut scale = floor;
    for (x, y) in a.iter().zip(b) {
        diff = diff.max((x - y).abs());
        scale = scale.max(x.abs()).max(y.abs());
    }
    if diff == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Relative error between two arrays with a 1e-300 floor (pure magnitude
/// comparison; use [`rel_err_vec`] with an explicit floor for gradients).
pub fn rel_err(a: &Array, b: &Array) -> f64 {
    rel_err_vec(a.data(), b.data(), 1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_series_matches_libm() {
        for &z in &[-3.0, -1.0, -1e-9, 0.0, 0.3, 2.0] {
            let s = exp_series(z, 30);
            assert!((s - z.exp()).abs() <= 1e-13 * z.exp().max(1.0), "z={z}");
        }
    }

    #[test]
    fn expm1_over_z_series_matches_libm() {
        for &z in &[-4.0, -0.5, -1e-10, 1e-12, 0.25, 3.0] {
            let s = expm1_over_z_series(z, 30);
            let reference = if z == 0.0 { 1.0 } else { z.exp_m1() / z };
            assert!((s - reference).abs() < 1e-13, "z={z}: {s} vs {reference}");
        }
    }

    #[test]
    fn discretize_scalar_series_closed_form() {
        // a=-1, delta=0.5, b=1: a_bar = e^-0.5, b_bar = 1 - e^-0.5.
        let (a_bar, b_bar) = discretize_scalar_series(-1.0, 1.0, 0.5, 30);
        assert!((a_bar - 0.606531).abs() < 1e-6);
        assert!((b_bar - 0.393469).abs() < 1e-6);
    }

    #[test]
    fn finite_difference_on_quadratic() {
        let f = |v: &[f64]| v[0] * v[0] + 2.0 * v[0] * v[1];
        let g = finite_difference_grad(f, &[1.0, 2.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-9);
        assert!((g[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rel_err_conventions() {
        assert_eq!(rel_err_vec(&[0.0, 0.0], &[0.0, 0.0], 1e-3), 0.0);
        assert!((rel_err_vec(&[1.0], &[1.1], 1e-3) - 0.1 / 1.1).abs() < 1e-12);
    }
}

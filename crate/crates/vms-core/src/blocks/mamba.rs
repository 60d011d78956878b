//! Gated selective-scan block: widen by the expansion factor, mix over time
//! with one forward scan, gate, and project back.

use crate::blocks::linear::{CausalConv1d, Linear};
use crate::error::{Error, Result};
use crate::num::array::Array;
use crate::num::rng::Rng;
use crate::num::scalar::{silu, silu_prime};
use crate::ssm::backward::selective_scan_backward;
use crate::ssm::selective::{dt_rank_heuristic, selective_scan, SsmParams};

/// One block of width `d` with expansion `e`: `in_proj` produces a scan
/// stream and a gate stream of `e*d` channels each, the scan stream passes
/// through a causal depthwise conv, silu, and the selective scan, and the
/// output is the scan result gated by `silu(gate)` projected back to `d`.
#[derive(Debug, Clone)]
pub struct MambaBlock {
    pub d: usize,
    pub e: usize,
    /// `[2 e d, d]`.
    pub in_proj: Linear,
    /// Depthwise over `e d` channels.
    pub conv: CausalConv1d,
    /// `d_inner = e d`.
    pub ssm: SsmParams,
    /// `[d, e d]`.
    pub out_proj: Linear,
}

impl MambaBlock {
    /// Draw order: in_proj, conv, ssm, out_proj. The delta rank is
    /// `dt_rank_heuristic(d)` (model width, not inner width).
    pub fn init(d: usize, e: usize, n: usize, conv_width: usize, rng: &mut Rng) -> Result<MambaBlock> {
        if d == 0 || e == 0 || n == 0 || conv_width == 0 {
            return Err(Error::InvalidConfig(format!(
                "MambaBlock::init: all of d={d}, e={e}, n={n}, conv_width={conv_width} must be >= 1"
            )));
        }
        let inner = e * d;
        Ok(MambaBlock {
            d,
            e,
            in_proj: Linear::init(2 * inner, d, rng),
            conv: CausalConv1d::init(inner, conv_width, rng),
            ssm: SsmParams::init(inner, n, dt_rank_heuristic(d), rng),
            out_proj: Linear::init(d, inner, rng),
        })
    }

    pub fn inner_width(&self) -> usize {
        self.e * self.d
    }

    fn check_input(&self, x: &Array) -> Result<()> {
        if x.ndim() != 2 || x.shape()[1] != self.d {
            return Err(Error::ShapeMismatch(format!(
                "MambaBlock: x must be [M, {}], got {:?}",
                self.d,
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array) -> Result<Array> {
        self.check_input(x)?;
        let inner = self.inner_width();
        let u0 = self.in_proj.apply(x)?;
        let x_s = u0.slice_cols(0..inner);
        let x_g = u0.slice_cols(inner..2 * inner);
        let c = self.conv.apply(&x_s)?;
        let u = c.map(silu, "silu(conv out)")?;
        let y_s = selective_scan(&self.ssm, &u)?;
        let g = x_g.map(silu, "silu(gate)")?;
        let z = y_s.mul(&g)?;
        self.out_proj.apply(&z)
    }

    /// Gradients of `sum(dout * forward(x))`: the input cotangent and the
    /// parameter gradients flattened in [`params_flat`](Self::params_flat)
    /// order. Intermediates are recomputed rather than taped.
    pub fn backward(&self, x: &Array, dout: &Array) -> Result<(Array, Vec<f64>)> {
        self.check_input(x)?;
        if dout.shape() != x.shape() {
            return Err(Error::ShapeMismatch(format!(
                "MambaBlock::backward: dout {:?} vs x {:?}",
                dout.shape(),
                x.shape()
            )));
        }
        let inner = self.inner_width();
        let u0 = self.in_proj.apply(x)?;
        let x_s = u0.slice_cols(0..inner);
        let x_g = u0.slice_cols(inner..2 * inner);
        let c = self.conv.apply(&x_s)?;
        let u = c.map(silu, "silu(conv out)")?;
        let y_s = selective_scan(&self.ssm, &u)?;
        let g = x_g.map(silu, "silu(gate)")?;
        let z = y_s.mul(&g)?;

        let (dz, dout_w, dout_b) = self.out_proj.backward(&z, dout)?;
        let dy_s = dz.mul(&g)?;
        let dg = dz.mul(&y_s)?;
        let dx_g = dg.mul(&x_g.map(silu_prime, "silu'(gate)")?)?;
        let sg = selective_scan_backward(&self.ssm, &u, &dy_s)?;
        let dc = sg.dx.mul(&c.map(silu_prime, "silu'(conv out)")?)?;
        let (dx_s, dconv_w, dconv_b) = self.conv.backward(&x_s, &dc)?;
        let du0 = Array::concat_cols(&[&dx_s, &dx_g])?;
        let (dx, din_w, din_b) = self.in_proj.backward(x, &du0)?;

        let mut flat = Vec::with_capacity(self.param_len());
        for part in [&din_w, &din_b, &dconv_w, &dconv_b] {
            flat.extend_from_slice(part.data());
        }
        flat.extend_from_slice(&sg.flat());
        flat.extend_from_slice(dout_w.data());
        flat.extend_from_slice(dout_b.data());
        Ok((dx, flat))
    }

    pub fn param_len(&self) -> usize {
        self.in_proj.w.len()
            + self.in_proj.b.len()
            + self.conv.w.len()
            + self.conv.b.len()
            + self.ssm.param_len()
            + self.out_proj.w.len()
            + self.out_proj.b.len()
    }

    /// Fixed order: in_w, in_b, conv_w, conv_b, ssm (its own order), out_w,
    /// out_b. [`backward`](Self::backward) emits gradients to match.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        for part in [&self.in_proj.w, &self.in_proj.b, &self.conv.w, &self.conv.b] {
            out.extend_from_slice(part.data());
        }
        out.extend(self.ssm.params_flat());
        out.extend_from_slice(self.out_proj.w.data());
        out.extend_from_slice(self.out_proj.b.data());
        out
    }

    pub fn with_params_flat(&self, flat: &[f64]) -> Result<MambaBlock> {
        if flat.len() != self.param_len() {
            return Err(Error::ShapeMismatch(format!(
                "MambaBlock::with_params_flat: got {} values, want {}",
                flat.len(),
                self.param_len()
            )));
        }
        let mut cursor = 0;
        let mut take = |shape: &[usize]| {
            let len: usize = shape.iter().product();
            let a = Array::from_vec(shape.to_vec(), flat[cursor..cursor + len].to_vec());
            cursor += len;
            a
        };
        let in_proj = Linear::new(take(self.in_proj.w.shape())?, take(self.in_proj.b.shape())?)?;
        let conv = CausalConv1d {
            w: take(self.conv.w.shape())?,
            b: take(self.conv.b.shape())?,
        };
        let ssm = self.ssm.with_params_flat(take(&[self.ssm.param_len()])?.data())?;
        let out_proj = Linear::new(take(self.out_proj.w.shape())?, take(self.out_proj.b.shape())?)?;
        drop(take);
        debug_assert_eq!(cursor, flat.len());
        Ok(MambaBlock {
            d: self.d,
            e: self.e,
            in_proj,
            conv,
            ssm,
            out_proj,
        })
    }
}

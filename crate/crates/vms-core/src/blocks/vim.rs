//! Bidirectional gated scan block: one shared input projection and one
//! shared depthwise conv bank feed two direction-specific selective scans
//! (the backward one runs on the time-reversed stream and is re-reversed),
//! both gated by the same silu gate and averaged before the output
//! projection. Sharing the conv bank keeps the static parameter count equal
//! to the single-direction block's.

use crate::blocks::linear::{CausalConv1d, Linear};
use crate::blocks::mamba::MambaBlock;
use crate::error::{Error, Result};
use crate::num::array::{reverse_seq, Array};
use crate::num::rng::Rng;
use crate::num::scalar::{silu, silu_prime};
use crate::ssm::backward::selective_scan_backward;
use crate::ssm::selective::{dt_rank_heuristic, selective_scan, SsmParams};

#[derive(Debug, Clone)]
pub struct VimBlock {
    pub d: usize,
    pub e: usize,
    /// `[2 e d, d]`, shared by both directions.
    pub in_proj: Linear,
    /// One shared depthwise bank over `e d` channels, applied to the
    /// forward-ordered stream and to the reversed stream.
    pub conv: CausalConv1d,
    pub ssm_fwd: SsmParams,
    pub ssm_bwd: SsmParams,
    /// `[d, e d]`.
    pub out_proj: Linear,
}

impl VimBlock {
    /// Draw order: in_proj, conv, ssm_fwd, ssm_bwd, out_proj.
    pub fn init(d: usize, e: usize, n: usize, conv_width: usize, rng: &mut Rng) -> Result<VimBlock> {
        if d == 0 || e == 0 || n == 0 || conv_width == 0 {
            return Err(Error::InvalidConfig(format!(
                "VimBlock::init: all of d={d}, e={e}, n={n}, conv_width={conv_width} must be >= 1"
            )));
        }
        let inner = e * d;
        let r = dt_rank_heuristic(d);
        Ok(VimBlock {
            d,
            e,
            in_proj: Linear::init(2 * inner, d, rng),
            conv: CausalConv1d::init(inner, conv_width, rng),
            ssm_fwd: SsmParams::init(inner, n, r, rng),
            ssm_bwd: SsmParams::init(inner, n, r, rng),
            out_proj: Linear::init(d, inner, rng),
        })
    }

    pub fn inner_width(&self) -> usize {
        self.e * self.d
    }

    /// The same block with the roles of the two direction scans exchanged.
    pub fn swap_directions(&self) -> VimBlock {
        let mut s = self.clone();
        std::mem::swap(&mut s.ssm_fwd, &mut s.ssm_bwd);
        s
    }

    fn check_input(&self, x: &Array) -> Result<()> {
        if x.ndim() != 2 || x.shape()[1] != self.d {
            return Err(Error::ShapeMismatch(format!(
                "VimBlock: x must be [M, {}], got {:?}",
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
        let g = x_g.map(silu, "silu(gate)")?;

        let cf = self.conv.apply(&x_s)?;
        let uf = cf.map(silu, "silu(conv fwd)")?;
        let yf = selective_scan(&self.ssm_fwd, &uf)?;

        let xr = reverse_seq(&x_s);
        let cb = self.conv.apply(&xr)?;
        let ub = cb.map(silu, "silu(conv bwd)")?;
        let yb = reverse_seq(&selective_scan(&self.ssm_bwd, &ub)?);

        let z = yf.mul(&g)?.add(&yb.mul(&g)?)?.scale(0.5)?;
        self.out_proj.apply(&z)
    }

    /// Input cotangent plus parameter gradients in
    /// [`params_flat`](Self::params_flat) order. Both direction chains
    /// accumulate into the one shared conv bank.
    pub fn backward(&self, x: &Array, dout: &Array) -> Result<(Array, Vec<f64>)> {
        self.check_input(x)?;
        if dout.shape() != x.shape() {
            return Err(Error::ShapeMismatch(format!(
                "VimBlock::backward: dout {:?} vs x {:?}",
                dout.shape(),
                x.shape()
            )));
        }
        let inner = self.inner_width();
        let u0 = self.in_proj.apply(x)?;
        let x_s = u0.slice_cols(0..inner);
        let x_g = u0.slice_cols(inner..2 * inner);
        let g = x_g.map(silu, "silu(gate)")?;
        let cf = self.conv.apply(&x_s)?;
        let uf = cf.map(silu, "silu(conv fwd)")?;
        let yf = selective_scan(&self.ssm_fwd, &uf)?;
        let xr = reverse_seq(&x_s);
        let cb = self.conv.apply(&xr)?;
        let ub = cb.map(silu, "silu(conv bwd)")?;
        let yb = reverse_seq(&selective_scan(&self.ssm_bwd, &ub)?);
        let z = yf.mul(&g)?.add(&yb.mul(&g)?)?.scale(0.5)?;

        let (dz, dout_w, dout_b) = self.out_proj.backward(&z, dout)?;
        let half_gate = dz.mul(&g)?.scale(0.5)?;
        let dg = dz.mul(&yf.add(&yb)?)?.scale(0.5)?;
        let dx_g = dg.mul(&x_g.map(silu_prime, "silu'(gate)")?)?;

        let sgf = selective_scan_backward(&self.ssm_fwd, &uf, &half_gate)?;
        let dcf = sgf.dx.mul(&cf.map(silu_prime, "silu'(conv fwd)")?)?;
        let (dxs_f, dconv_w_f, dconv_b_f) = self.conv.backward(&x_s, &dcf)?;

        let sgb = selective_scan_backward(&self.ssm_bwd, &ub, &reverse_seq(&half_gate))?;
        let dcb = sgb.dx.mul(&cb.map(silu_prime, "silu'(conv bwd)")?)?;
        let (dxr, dconv_w_b, dconv_b_b) = self.conv.backward(&xr, &dcb)?;

        let dx_s = dxs_f.add(&reverse_seq(&dxr))?;
        let dconv_w = dconv_w_f.add(&dconv_w_b)?;
        let dconv_b = dconv_b_f.add(&dconv_b_b)?;
        let du0 = Array::concat_cols(&[&dx_s, &dx_g])?;
        let (dx, din_w, din_b) = self.in_proj.backward(x, &du0)?;

        let mut flat = Vec::with_capacity(self.param_len());
        for part in [&din_w, &din_b, &dconv_w, &dconv_b] {
            flat.extend_from_slice(part.data());
        }
        flat.extend_from_slice(&sgf.flat());
        flat.extend_from_slice(&sgb.flat());
        flat.extend_from_slice(dout_w.data());
        flat.extend_from_slice(dout_b.data());
        Ok((dx, flat))
    }

    pub fn param_len(&self) -> usize {
        self.in_proj.w.len()
            + self.in_proj.b.len()
            + self.conv.w.len()
            + self.conv.b.len()
            + self.ssm_fwd.param_len()
            + self.ssm_bwd.param_len()
            + self.out_proj.w.len()
            + self.out_proj.b.len()
    }

    /// Fixed order: in_w, in_b, conv_w, conv_b, ssm_fwd, ssm_bwd, out_w,
    /// out_b.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        for part in [&self.in_proj.w, &self.in_proj.b, &self.conv.w, &self.conv.b] {
            out.extend_from_slice(part.data());
        }
        out.extend(self.ssm_fwd.params_flat());
        out.extend(self.ssm_bwd.params_flat());
        out.extend_from_slice(self.out_proj.w.data());
        out.extend_from_slice(self.out_proj.b.data());
        out
    }

    pub fn with_params_flat(&self, flat: &[f64]) -> Result<VimBlock> {
        if flat.len() != self.param_len() {
            return Err(Error::ShapeMismatch(format!(
                "VimBlock::with_params_flat: got {} values, want {}",
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
        let ssm_fwd = self.ssm_fwd.with_params_flat(take(&[self.ssm_fwd.param_len()])?.data())?;
        let ssm_bwd = self.ssm_bwd.with_params_flat(take(&[self.ssm_bwd.param_len()])?.data())?;
        let out_proj = Linear::new(take(self.out_proj.w.shape())?, take(self.out_proj.b.shape())?)?;
        drop(take);
        debug_assert_eq!(cursor, flat.len());
        Ok(VimBlock {
            d: self.d,
            e: self.e,
            in_proj,
            conv,
            ssm_fwd,
            ssm_bwd,
            out_proj,
        })
    }

    /// The forward-direction pieces reassembled as a single-direction block
    /// (shared projections, conv, and the forward scan). Used by the
    /// collapse tests.
    pub fn forward_only_block(&self) -> MambaBlock {
        MambaBlock {
            d: self.d,
            e: self.e,
            in_proj: self.in_proj.clone(),
            conv: self.conv.clone(),
            ssm: self.ssm_fwd.clone(),
            out_proj: self.out_proj.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn block(seed: u64) -> (VimBlock, Rng) {
        let mut rng = Rng::new(seed);
        let b = VimBlock::init(4, 2, 3, 4, &mut rng).unwrap();
        (b, rng)
    }

    fn palindrome(rng: &mut Rng, m: usize, d: usize) -> Array {
        let mut v = vec![0.0; m * d];
        for t in 0..m.div_ceil(2) {
            let row = rng.uniform_vec(d, -1.0, 1.0);
            v[t * d..(t + 1) * d].copy_from_slice(&row);
            v[(m - 1 - t) * d..(m - t) * d].copy_from_slice(&row);
        }
        Array::from_vec(vec![m, d], v).unwrap()
    }

    #[test]
    fn preserves_shape_including_empty() {
        let (b, mut rng) = block(1);
        for m in [0usize, 1, 9] {
            let x = Array::from_vec(vec![m, 4], rng.uniform_vec(m * 4, -1.0, 1.0)).unwrap();
            assert_eq!(b.forward(&x).unwrap().shape(), &[m, 4]);
        }
    }

    #[test]
    fn tied_directions_map_palindromes_to_palindromes() {
        // With ssm_bwd == ssm_fwd the two branches are mirror images on a
        // palindromic input, so their average (and the pointwise output
        // projection of it) is palindromic, exactly.
        let (mut b, mut rng) = block(2);
        b.ssm_bwd = b.ssm_fwd.clone();
        let x = palindrome(&mut rng, 7, 4);
        let y = b.forward(&x).unwrap();
        assert_eq!(y.data(), reverse_seq(&y).data());
    }

    #[test]
    fn reversal_equivariance_with_swapped_directions() {
        for seed in [3u64, 4, 5] {
            let (b, mut rng) = block(seed);
            let x = Array::from_vec(vec![9, 4], rng.uniform_vec(36, -1.0, 1.0)).unwrap();
            let lhs = b.swap_directions().forward(&reverse_seq(&x)).unwrap();
            let rhs = reverse_seq(&b.forward(&x).unwrap());
            assert_eq!(lhs.data(), rhs.data(), "seed {seed}");
        }
    }

    #[test]
    fn zeroed_backward_readout_collapses_to_half_forward() {
        // Kill the backward branch's output path (readout and skip): the
        // block then computes out_proj(gated_forward / 2), which relates to
        // the single-direction block by doubling around the output bias.
        let (mut b, mut rng) = block(6);
        b.ssm_bwd.c_proj = Array::zeros(b.ssm_bwd.c_proj.shape().to_vec());
        b.ssm_bwd.c_bias = Array::zeros(b.ssm_bwd.c_bias.shape().to_vec());
        b.ssm_bwd.d_skip = Array::zeros(b.ssm_bwd.d_skip.shape().to_vec());
        let mono = b.forward_only_block();
        let x = Array::from_vec(vec![8, 4], rng.uniform_vec(32, -1.0, 1.0)).unwrap();
        let y_vim = b.forward(&x).unwrap();
        let y_mono = mono.forward(&x).unwrap();
        for t in 0..8 {
            for j in 0..4 {
                let bias = mono.out_proj.b.data()[j];
                let lhs = 2.0 * (y_vim.at(&[t, j]) - bias);
                let rhs = y_mono.at(&[t, j]) - bias;
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0),
                    "t={t} j={j}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (b, mut rng) = block(7);
        let (m, d) = (5, 4);
        let x = Array::from_vec(vec![m, d], rng.uniform_vec(m * d, -1.0, 1.0)).unwrap();
        let dy = Array::from_vec(vec![m, d], rng.uniform_vec(m * d, -1.0, 1.0)).unwrap();
        let (dx, dparams) = b.backward(&x, &dy).unwrap();
        let flat: Vec<f64> = b.params_flat().iter().chain(x.data()).copied().collect();
        let np = b.param_len();
        let fd = oracle::finite_difference_grad(
            |f| {
                let bb = b.with_params_flat(&f[..np]).unwrap();
                let xx = Array::from_vec(vec![m, d], f[np..].to_vec()).unwrap();
                let y = bb.forward(&xx).unwrap();
                y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
            },
            &flat,
            1e-5,
        );
        let an: Vec<f64> = dparams.iter().chain(dx.data()).copied().collect();
        let err_p = oracle::rel_err_vec(&fd[..np], &an[..np], 1e-2);
        let err_x = oracle::rel_err_vec(&fd[np..], &an[np..], 1e-2);
        assert!(err_p < 1e-6, "param grads rel err {err_p}");
        assert!(err_x < 1e-6, "input grads rel err {err_x}");
    }

    #[test]
    fn params_flat_round_trip() {
        let (b, mut rng) = block(8);
        let b2 = b.with_params_flat(&b.params_flat()).unwrap();
        let x = Array::from_vec(vec![4, 4], rng.uniform_vec(16, -1.0, 1.0)).unwrap();
        assert_eq!(b.forward(&x).unwrap().data(), b2.forward(&x).unwrap().data());
    }
}

//! Decomposed bidirectional block: the input projection emits four
//! half-width streams (forward scan, forward gate, backward scan, backward
//! gate), one shared selective scan runs each scan stream in its own
//! direction through its own conv bank, each result is gated by its own
//! silu gate, and the two halves are concatenated before the output
//! projection. Splitting the width in half keeps both the projection and
//! the per-direction scan parameter budgets equal to the single-direction
//! block's.

use crate::blocks::linear::{CausalConv1d, Linear};
use crate::error::{Error, Result};
use crate::num::array::{reverse_seq, Array};
use crate::num::rng::Rng;
use crate::num::scalar::{silu, silu_prime};
use crate::ssm::backward::selective_scan_backward;
use crate::ssm::selective::{dt_rank_heuristic, selective_scan, SsmParams};

#[derive(Debug, Clone)]
pub struct DbmBlock {
    pub d: usize,
    pub e: usize,
    /// `[2 e d, d]`; output rows in stream order scan_fwd, gate_fwd,
    /// scan_bwd, gate_bwd, each `e d / 2` wide.
    pub in_proj: Linear,
    /// Depthwise over the forward half (`e d / 2` channels).
    pub conv_fwd: CausalConv1d,
    /// Depthwise over the backward half.
    pub conv_bwd: CausalConv1d,
    /// One shared scan, `d_inner = e d / 2`, engaged once per direction.
    pub ssm: SsmParams,
    /// `[d, e d]` over the concatenated gated halves.
    pub out_proj: Linear,
}

impl DbmBlock {
    /// Draw order: in_proj, conv_fwd, conv_bwd, ssm, out_proj. Fails with
    /// [`Error::OddInnerWidth`] when `e * d` is odd (the four streams need
    /// an even inner width to split).
    pub fn init(d: usize, e: usize, n: usize, conv_width: usize, rng: &mut Rng) -> Result<DbmBlock> {
        if d == 0 || e == 0 || n == 0 || conv_width == 0 {
            return Err(Error::InvalidConfig(format!(
                "DbmBlock::init: all of d={d}, e={e}, n={n}, conv_width={conv_width} must be >= 1"
            )));
        }
        let inner = e * d;
        if inner % 2 != 0 {
            return Err(Error::OddInnerWidth(inner));
        }
        let half = inner / 2;
        Ok(DbmBlock {
            d,
            e,
            in_proj: Linear::init(2 * inner, d, rng),
            conv_fwd: CausalConv1d::init(half, conv_width, rng),
            conv_bwd: CausalConv1d::init(half, conv_width, rng),
            ssm: SsmParams::init(half, n, dt_rank_heuristic(d), rng),
            out_proj: Linear::init(d, inner, rng),
        })
    }

    pub fn inner_width(&self) -> usize {
        self.e * self.d
    }

    pub fn half_width(&self) -> usize {
        self.inner_width() / 2
    }

    /// The same block with the forward and backward roles exchanged: the
    /// in_proj stream groups, the out_proj column halves, and the conv
    /// banks swap; the shared scan is direction-blind and stays put.
    pub fn swap_directions(&self) -> DbmBlock {
        let h = self.half_width();
        let w = &self.in_proj.w;
        let in_w = Array::concat_rows(&[&w.slice_rows(2 * h..4 * h), &w.slice_rows(0..2 * h)])
            .expect("row groups have equal widths");
        let mut in_b = self.in_proj.b.data()[2 * h..4 * h].to_vec();
        in_b.extend_from_slice(&self.in_proj.b.data()[..2 * h]);
        let ow = &self.out_proj.w;
        let out_w = Array::concat_cols(&[&ow.slice_cols(h..2 * h), &ow.slice_cols(0..h)])
            .expect("column groups have equal heights");
        DbmBlock {
            d: self.d,
            e: self.e,
            in_proj: Linear {
                w: in_w,
                b: Array::from_vec_unchecked(vec![4 * h], in_b),
            },
            conv_fwd: self.conv_bwd.clone(),
            conv_bwd: self.conv_fwd.clone(),
            ssm: self.ssm.clone(),
            out_proj: Linear {
                w: out_w,
                b: self.out_proj.b.clone(),
            },
        }
    }

    fn check_input(&self, x: &Array) -> Result<()> {
        if x.ndim() != 2 || x.shape()[1] != self.d {
            return Err(Error::ShapeMismatch(format!(
                "DbmBlock: x must be [M, {}], got {:?}",
                self.d,
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array) -> Result<Array> {
        self.check_input(x)?;
        let h = self.half_width();
        let u0 = self.in_proj.apply(x)?;
        let s_f = u0.slice_cols(0..h);
        let g_f = u0.slice_cols(h..2 * h);
        let s_b = u0.slice_cols(2 * h..3 * h);
        let g_b = u0.slice_cols(3 * h..4 * h);

        let uf = self.conv_fwd.apply(&s_f)?.map(silu, "silu(conv fwd)")?;
        let yf = selective_scan(&self.ssm, &uf)?;
        let zf = yf.mul(&g_f.map(silu, "silu(gate fwd)")?)?;

        let ub = self.conv_bwd.apply(&reverse_seq(&s_b))?.map(silu, "silu(conv bwd)")?;
        let yb = reverse_seq(&selective_scan(&self.ssm, &ub)?);
        let zb = yb.mul(&g_b.map(silu, "silu(gate bwd)")?)?;

        self.out_proj.apply(&Array::concat_cols(&[&zf, &zb])?)
    }

    /// Input cotangent plus parameter gradients in
    /// [`params_flat`](Self::params_flat) order. Both directions accumulate
    /// into the one shared scan's gradients.
    pub fn backward(&self, x: &Array, dout: &Array) -> Result<(Array, Vec<f64>)> {
        self.check_input(x)?;
        if dout.shape() != x.shape() {
            return Err(Error::ShapeMismatch(format!(
                "DbmBlock::backward: dout {:?} vs x {:?}",
                dout.shape(),
                x.shape()
            )));
        }
        let h = self.half_width();
        let u0 = self.in_proj.apply(x)?;
        let s_f = u0.slice_cols(0..h);
        let g_f = u0.slice_cols(h..2 * h);
        let s_b = u0.slice_cols(2 * h..3 * h);
        let g_b = u0.slice_cols(3 * h..4 * h);
        let cf = self.conv_fwd.apply(&s_f)?;
        let uf = cf.map(silu, "silu(conv fwd)")?;
        let yf = selective_scan(&self.ssm, &uf)?;
        let gf = g_f.map(silu, "silu(gate fwd)")?;
        let sr = reverse_seq(&s_b);
        let cb = self.conv_bwd.apply(&sr)?;
        let ub = cb.map(silu, "silu(conv bwd)")?;
        let yb = reverse_seq(&selective_scan(&self.ssm, &ub)?);
        let gb = g_b.map(silu, "silu(gate bwd)")?;
        let z = Array::concat_cols(&[&yf.mul(&gf)?, &yb.mul(&gb)?])?;

        let (dz, dout_w, dout_b) = self.out_proj.backward(&z, dout)?;
        let dzf = dz.slice_cols(0..h);
        let dzb = dz.slice_cols(h..2 * h);

        let dyf = dzf.mul(&gf)?;
        let dg_f = dzf.mul(&yf)?.mul(&g_f.map(silu_prime, "silu'(gate fwd)")?)?;
        let sgf = selective_scan_backward(&self.ssm, &uf, &dyf)?;
        let dcf = sgf.dx.mul(&cf.map(silu_prime, "silu'(conv fwd)")?)?;
        let (ds_f, dconv_w_f, dconv_b_f) = self.conv_fwd.backward(&s_f, &dcf)?;

        let dyb = dzb.mul(&gb)?;
        let dg_b = dzb.mul(&yb)?.mul(&g_b.map(silu_prime, "silu'(gate bwd)")?)?;
        let sgb = selective_scan_backward(&self.ssm, &ub, &reverse_seq(&dyb))?;
        let dcb = sgb.dx.mul(&cb.map(silu_prime, "silu'(conv bwd)")?)?;
        let (dsr, dconv_w_b, dconv_b_b) = self.conv_bwd.backward(&sr, &dcb)?;
        let ds_b = reverse_seq(&dsr);

        let du0 = Array::concat_cols(&[&ds_f, &dg_f, &ds_b, &dg_b])?;
        let (dx, din_w, din_b) = self.in_proj.backward(x, &du0)?;

        // Shared scan: sum the two directions' gradient vectors.
        let mut dssm = sgf.flat();
        for (slot, v) in dssm.iter_mut().zip(sgb.flat()) {
            *slot += v;
        }

        let mut flat = Vec::with_capacity(self.param_len());
        for part in [&din_w, &din_b, &dconv_w_f, &dconv_b_f, &dconv_w_b, &dconv_b_b] {
            flat.extend_from_slice(part.data());
        }
        flat.extend_from_slice(&dssm);
        flat.extend_from_slice(dout_w.data());
        flat.extend_from_slice(dout_b.data());
        Ok((dx, flat))
    }

    pub fn param_len(&self) -> usize {
        self.in_proj.w.len()
            + self.in_proj.b.len()
            + self.conv_fwd.w.len()
            + self.conv_fwd.b.len()
            + self.conv_bwd.w.len()
            + self.conv_bwd.b.len()
            + self.ssm.param_len()
            + self.out_proj.w.len()
            + self.out_proj.b.len()
    }

    /// Fixed order: in_w, in_b, conv_fwd_w, conv_fwd_b, conv_bwd_w,
    /// conv_bwd_b, ssm, out_w, out_b.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        for part in [
            &self.in_proj.w,
            &self.in_proj.b,
            &self.conv_fwd.w,
            &self.conv_fwd.b,
            &self.conv_bwd.w,
            &self.conv_bwd.b,
        ] {
            out.extend_from_slice(part.data());
        }
        out.extend(self.ssm.params_flat());
        out.extend_from_slice(self.out_proj.w.data());
        out.extend_from_slice(self.out_proj.b.data());
        out
    }

    pub fn with_params_flat(&self, flat: &[f64]) -> Result<DbmBlock> {
        if flat.len() != self.param_len() {
            return Err(Error::ShapeMismatch(format!(
                "DbmBlock::with_params_flat: got {} values, want {}",
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
        let conv_fwd = CausalConv1d {
            w: take(self.conv_fwd.w.shape())?,
            b: take(self.conv_fwd.b.shape())?,
        };
        let conv_bwd = CausalConv1d {
            w: take(self.conv_bwd.w.shape())?,
            b: take(self.conv_bwd.b.shape())?,
        };
        let ssm = self.ssm.with_params_flat(take(&[self.ssm.param_len()])?.data())?;
        let out_proj = Linear::new(take(self.out_proj.w.shape())?, take(self.out_proj.b.shape())?)?;
        drop(take);
        debug_assert_eq!(cursor, flat.len());
        Ok(DbmBlock {
            d: self.d,
            e: self.e,
            in_proj,
            conv_fwd,
            conv_bwd,
            ssm,
            out_proj,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn block(seed: u64) -> (DbmBlock, Rng) {
        let mut rng = Rng::new(seed);
        let b = DbmBlock::init(4, 2, 3, 4, &mut rng).unwrap();
        (b, rng)
    }

    #[test]
    fn odd_inner_width_rejected() {
        let mut rng = Rng::new(1);
        assert!(matches!(
            DbmBlock::init(3, 1, 2, 4, &mut rng),
            Err(Error::OddInnerWidth(3))
        ));
    }

    #[test]
    fn preserves_shape_including_empty() {
        let (b, mut rng) = block(2);
        for m in [0usize, 1, 9] {
            let x = Array::from_vec(vec![m, 4], rng.uniform_vec(m * 4, -1.0, 1.0)).unwrap();
            assert_eq!(b.forward(&x).unwrap().shape(), &[m, 4]);
        }
    }

    #[test]
    fn zeroed_gates_leave_only_output_bias() {
        let (b, mut rng) = block(3);
        let h = b.half_width();
        let mut flat = b.params_flat();
        // Zero the gate stream rows of in_proj (weights and biases): rows
        // h..2h and 3h..4h.
        let d = b.d;
        for row in (h..2 * h).chain(3 * h..4 * h) {
            for c in 0..d {
                flat[row * d + c] = 0.0;
            }
            flat[b.in_proj.w.len() + row] = 0.0;
        }
        let zb = b.with_params_flat(&flat).unwrap();
        let x = Array::from_vec(vec![5, 4], rng.uniform_vec(20, -1.0, 1.0)).unwrap();
        let y = zb.forward(&x).unwrap();
        for t in 0..5 {
            for j in 0..4 {
                assert_eq!(y.at(&[t, j]), zb.out_proj.b.data()[j]);
            }
        }
    }

    #[test]
    fn half_swap_reversal_equivariance() {
        for seed in [4u64, 5, 6] {
            let (b, mut rng) = block(seed);
            let x = Array::from_vec(vec![9, 4], rng.uniform_vec(36, -1.0, 1.0)).unwrap();
            let lhs = b.swap_directions().forward(&reverse_seq(&x)).unwrap();
            let rhs = reverse_seq(&b.forward(&x).unwrap());
            let err = oracle::rel_err(&lhs, &rhs);
            assert!(err < 1e-12, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn swap_is_an_involution() {
        let (b, mut rng) = block(7);
        let b2 = b.swap_directions().swap_directions();
        let x = Array::from_vec(vec![6, 4], rng.uniform_vec(24, -1.0, 1.0)).unwrap();
        assert_eq!(b.forward(&x).unwrap().data(), b2.forward(&x).unwrap().data());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (b, mut rng) = block(8);
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
        let (b, mut rng) = block(9);
        let b2 = b.with_params_flat(&b.params_flat()).unwrap();
        let x = Array::from_vec(vec![4, 4], rng.uniform_vec(16, -1.0, 1.0)).unwrap();
        assert_eq!(b.forward(&x).unwrap().data(), b2.forward(&x).unwrap().data());
    }
}

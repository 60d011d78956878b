//! Tanh-gated temporal adapters. The inner block mixes each spatial
//! position's tokens along the time axis only; the gate starts at zero so a
//! freshly inserted adapter is the identity and the surrounding model's
//! output is unchanged.
//!
//! With the gate at zero the update term is `tanh(0) * y = +/-0.0` and IEEE
//! addition of a zero leaves the other operand's bits untouched, so the
//! identity holds bitwise with no special-casing. The one exception IEEE
//! permits: a negative-zero token plus a positive-zero update flips to
//! positive zero. None of the generators in this crate produce negative
//! zero, so the property is exercised as bit-exact.
//!
//! Two residual wirings for a divided space-time layer around a spatial
//! mixer `S`:
//! - vanilla: the gated temporal block is its own residual slot feeding the
//!   spatial mixer, `z = y + S(y)` with `y = x + tanh(g) * T(x)`;
//! - frozen: the adapter output feeds the spatial mixer but the outer
//!   residual bypasses it back to the raw input, `z = x + S(y)`.
//!
//! At `g = 0` both wirings reduce to `x + S(x)`.

use crate::blocks::config::Block;
use crate::error::{Error, Result};
use crate::num::array::Array;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdapterStyle {
    Vanilla,
    Frozen,
}

#[derive(Debug, Clone)]
pub struct Adapter {
    pub style: AdapterStyle,
    /// Pre-tanh gate scalar; zero at initialization.
    pub gate: f64,
    pub block: Block,
}

impl Adapter {
    pub fn new(style: AdapterStyle, block: Block) -> Adapter {
        Adapter {
            style,
            gate: 0.0,
            block,
        }
    }

    pub fn with_gate(mut self, gate: f64) -> Adapter {
        self.gate = gate;
        self
    }

    fn check_tokens(&self, tokens: &Array) -> Result<(usize, usize, usize)> {
        if tokens.ndim() != 3 || tokens.shape()[2] != self.block.d_model() {
            return Err(Error::ShapeMismatch(format!(
                "adapter: tokens must be [T, P, {}], got {:?}",
                self.block.d_model(),
                tokens.shape()
            )));
        }
        Ok((tokens.shape()[0], tokens.shape()[1], tokens.shape()[2]))
    }

    /// `x + tanh(gate) * block(x along time)`, independently per spatial
    /// position.
    pub fn forward(&self, tokens: &Array) -> Result<Array> {
        let (t, p, d) = self.check_tokens(tokens)?;
        let g = self.gate.tanh();
        let mut out = tokens.data().to_vec();
        for sp in 0..p {
            let mut col = Vec::with_capacity(t * d);
            for ti in 0..t {
                let base = (ti * p + sp) * d;
                col.extend_from_slice(&tokens.data()[base..base + d]);
            }
            let y = self.block.forward(&Array::from_vec(vec![t, d], col)?)?;
            for ti in 0..t {
                let base = (ti * p + sp) * d;
                for j in 0..d {
                    out[base + j] += g * y.at(&[ti, j]);
                }
            }
        }
        Array::from_vec(vec![t, p, d], out)
    }

    /// One divided space-time layer around the caller's spatial mixer,
    /// wired per [`AdapterStyle`]. `spatial` must preserve the `[T, P, D]`
    /// shape.
    pub fn divided_spacetime<F>(&self, tokens: &Array, spatial: F) -> Result<Array>
    where
        F: Fn(&Array) -> Result<Array>,
    {
        self.check_tokens(tokens)?;
        let mixed = self.forward(tokens)?;
        let spatial_out = spatial(&mixed)?;
        match self.style {
            AdapterStyle::Vanilla => mixed.add(&spatial_out),
            AdapterStyle::Frozen => tokens.add(&spatial_out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::config::{build_block, BlockConfig, BlockKind};
    use crate::num::rng::Rng;

    fn vim_adapter(style: AdapterStyle, seed: u64) -> Adapter {
        let cfg = BlockConfig {
            kind: BlockKind::Vim,
            d: 4,
            e: 2,
            n: 3,
            conv_width: 4,
            seed,
        };
        Adapter::new(style, build_block(&cfg).unwrap())
    }

    fn tokens(rng: &mut Rng, t: usize, p: usize, d: usize) -> Array {
        Array::from_vec(vec![t, p, d], rng.uniform_vec(t * p * d, -1.0, 1.0)).unwrap()
    }

    fn bits(a: &Array) -> Vec<u64> {
        a.data().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn zero_gate_is_bit_exact_identity() {
        let mut rng = Rng::new(1);
        for style in [AdapterStyle::Vanilla, AdapterStyle::Frozen] {
            let a = vim_adapter(style, 2);
            for _ in 0..10 {
                let x = tokens(&mut rng, 3, 5, 4);
                assert_eq!(bits(&a.forward(&x).unwrap()), bits(&x));
            }
        }
    }

    #[test]
    fn zero_gate_divided_layer_reduces_to_spatial_residual() {
        let mut rng = Rng::new(3);
        let x = tokens(&mut rng, 3, 5, 4);
        let spatial = |v: &Array| v.map(f64::sin, "spatial mixer");
        let want = x.add(&spatial(&x).unwrap()).unwrap();
        for style in [AdapterStyle::Vanilla, AdapterStyle::Frozen] {
            let z = vim_adapter(style, 4).divided_spacetime(&x, spatial).unwrap();
            assert_eq!(bits(&z), bits(&want), "{style:?}");
        }
    }

    #[test]
    fn styles_diverge_once_gated() {
        let mut rng = Rng::new(5);
        let x = tokens(&mut rng, 4, 3, 4);
        let spatial = |v: &Array| v.map(f64::sin, "spatial mixer");
        let vanilla = vim_adapter(AdapterStyle::Vanilla, 6)
            .with_gate(0.7)
            .divided_spacetime(&x, spatial)
            .unwrap();
        let frozen = vim_adapter(AdapterStyle::Frozen, 6)
            .with_gate(0.7)
            .divided_spacetime(&x, spatial)
            .unwrap();
        let diff = vanilla.sub(&frozen).unwrap().max_abs();
        assert!(diff > 1e-6, "wirings should differ at g != 0, diff {diff}");
    }

    #[test]
    fn single_frame_matches_direct_block_call() {
        let mut rng = Rng::new(7);
        let a = vim_adapter(AdapterStyle::Vanilla, 8).with_gate(0.3);
        let x = tokens(&mut rng, 1, 3, 4);
        let out = a.forward(&x).unwrap();
        let g = 0.3f64.tanh();
        for sp in 0..3 {
            let row: Vec<f64> = (0..4).map(|j| x.at(&[0, sp, j])).collect();
            let y = a.block.forward(&Array::from_vec(vec![1, 4], row).unwrap()).unwrap();
            for j in 0..4 {
                let want = x.at(&[0, sp, j]) + g * y.at(&[0, j]);
                assert!((out.at(&[0, sp, j]) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn spatial_positions_are_independent() {
        let mut rng = Rng::new(9);
        let a = vim_adapter(AdapterStyle::Frozen, 10).with_gate(1.1);
        let x = tokens(&mut rng, 4, 3, 4);
        let out = a.forward(&x).unwrap();
        // Swap spatial positions 0 and 2, run, swap back: same answer.
        let (t, p, d) = (4, 3, 4);
        let mut swapped = x.data().to_vec();
        for ti in 0..t {
            for j in 0..d {
                swapped.swap((ti * p) * d + j, (ti * p + 2) * d + j);
            }
        }
        let out_sw = a
            .forward(&Array::from_vec(vec![t, p, d], swapped).unwrap())
            .unwrap();
        for ti in 0..t {
            for j in 0..d {
                assert_eq!(out.at(&[ti, 0, j]), out_sw.at(&[ti, 2, j]));
                assert_eq!(out.at(&[ti, 2, j]), out_sw.at(&[ti, 0, j]));
                assert_eq!(out.at(&[ti, 1, j]), out_sw.at(&[ti, 1, j]));
            }
        }
    }

    #[test]
    fn rejects_wrong_rank_or_width() {
        let a = vim_adapter(AdapterStyle::Vanilla, 11);
        let flat = Array::zeros(vec![3, 4]);
        assert!(a.forward(&flat).is_err());
        let wide = Array::zeros(vec![2, 3, 5]);
        assert!(a.forward(&wide).is_err());
    }
}

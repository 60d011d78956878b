//! Dense and depthwise-convolution primitives used by the token-mixing
//! blocks, each with a hand-derived reverse pass.

use crate::error::{Error, Result};
use crate::num::array::{matmul, Array};
use crate::num::rng::Rng;

/// Dense layer `y = x w^T + b`, weights stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array,
    pub b: Array,
}

impl Linear {
    /// Uniform init in `(-1/sqrt(in), 1/sqrt(in))` for both weights and
    /// bias; draw order w then b.
    pub fn init(out: usize, inp: usize, rng: &mut Rng) -> Linear {
        let lim = 1.0 / (inp as f64).sqrt();
        Linear {
            w: Array::from_vec_unchecked(vec![out, inp], rng.uniform_vec(out * inp, -lim, lim)),
            b: Array::from_vec_unchecked(vec![out], rng.uniform_vec(out, -lim, lim)),
        }
    }

    pub fn new(w: Array, b: Array) -> Result<Linear> {
        if w.ndim() != 2 || b.shape() != [w.shape()[0]] {
            return Err(Error::ShapeMismatch(format!(
                "Linear: w {:?} with b {:?}",
                w.shape(),
                b.shape()
            )));
        }
        Ok(Linear { w, b })
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }

    /// `[M, in] -> [M, out]`.
    pub fn apply(&self, x: &Array) -> Result<Array> {
        let y = matmul(x, &self.w.transpose())?;
        let (m, out) = (y.shape()[0], y.shape()[1]);
        let mut v = y.data().to_vec();
        for t in 0..m {
            for o in 0..out {
                v[t * out + o] += self.b.data()[o];
            }
        }
        Ok(Array::from_vec_unchecked(vec![m, out], v))
    }

    /// Reverse pass of [`apply`](Self::apply): given the forward input and
    /// the output cotangent, returns `(dx, dw, db)`.
    pub fn backward(&self, x: &Array, dy: &Array) -> Result<(Array, Array, Array)> {
        let (m, inp, out) = (x.shape()[0], self.in_dim(), self.out_dim());
        if dy.shape() != [m, out] || x.shape()[1] != inp {
            return Err(Error::ShapeMismatch(format!(
                "Linear::backward: x {:?}, dy {:?}, w {:?}",
                x.shape(),
                dy.shape(),
                self.w.shape()
            )));
        }
        let dx = matmul(dy, &self.w)?;
        let dw = matmul(&dy.transpose(), x)?;
        let mut db = vec![0.0; out];
        for t in 0..m {
            for o in 0..out {
                db[o] += dy.data()[t * out + o];
            }
        }
        Ok((dx, dw, Array::from_vec(vec![out], db)?))
    }
}

/// Depthwise causal 1-d convolution over `[M, channels]` sequences with a
/// per-channel kernel of `width` taps; tap `width - 1` multiplies the
/// current token, earlier taps reach back in time, and positions before the
/// sequence start read zero.
#[derive(Debug, Clone)]
pub struct CausalConv1d {
    /// `[channels, width]`.
    pub w: Array,
    /// `[channels]`.
    pub b: Array,
}

impl CausalConv1d {
    /// Uniform init in `(-1/sqrt(width), 1/sqrt(width))`, w then b.
    pub fn init(channels: usize, width: usize, rng: &mut Rng) -> CausalConv1d {
        let lim = 1.0 / (width as f64).sqrt();
        CausalConv1d {
            w: Array::from_vec_unchecked(
                vec![channels, width],
                rng.uniform_vec(channels * width, -lim, lim),
            ),
            b: Array::from_vec_unchecked(vec![channels], rng.uniform_vec(channels, -lim, lim)),
        }
    }

    pub fn channels(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.w.shape()[1]
    }

    /// `y[t, c] = b[c] + sum_k w[c, k] x[t - width + 1 + k, c]`.
    pub fn apply(&self, x: &Array) -> Result<Array> {
        let (ch, width) = (self.channels(), self.width());
        if x.ndim() != 2 || x.shape()[1] != ch {
            return Err(Error::ShapeMismatch(format!(
                "CausalConv1d: x {:?}, want [M, {ch}]",
                x.shape()
            )));
        }
        let m = x.shape()[0];
        let mut y = vec![0.0; m * ch];
        for t in 0..m {
            for c in 0..ch {
                let mut acc = 0.0;
                for k in 0..width {
                    let s = t as isize - (width as isize - 1) + k as isize;
                    if s >= 0 {
                        acc += self.w.data()[c * width + k] * x.data()[s as usize * ch + c];
                    }
                }
                y[t * ch + c] = acc + self.b.data()[c];
            }
        }
        Array::from_vec(vec![m, ch], y)
    }

    /// Reverse pass of [`apply`](Self::apply): returns `(dx, dw, db)`.
    pub fn backward(&self, x: &Array, dy: &Array) -> Result<(Array, Array, Array)> {
        let (ch, width) = (self.channels(), self.width());
        if x.ndim() != 2 || x.shape()[1] != ch || dy.shape() != x.shape() {
            return Err(Error::ShapeMismatch(format!(
                "CausalConv1d::backward: x {:?}, dy {:?}",
                x.shape(),
                dy.shape()
            )));
        }
        let m = x.shape()[0];
        let mut dx = vec![0.0; m * ch];
        let mut dw = vec![0.0; ch * width];
        let mut db = vec![0.0; ch];
        for t in 0..m {
            for c in 0..ch {
                let g = dy.data()[t * ch + c];
                db[c] += g;
                for k in 0..width {
                    let s = t as isize - (width as isize - 1) + k as isize;
                    if s >= 0 {
                        dw[c * width + k] += g * x.data()[s as usize * ch + c];
                        dx[s as usize * ch + c] += g * self.w.data()[c * width + k];
                    }
                }
            }
        }
        Ok((
            Array::from_vec(vec![m, ch], dx)?,
            Array::from_vec(vec![ch, width], dw)?,
            Array::from_vec(vec![ch], db)?,
        ))
    }
}

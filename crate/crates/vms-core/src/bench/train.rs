//! End-to-end gradient exercise: full-batch gradient descent with heavy-ball
//! momentum teaching one block to reproduce a causally smoothed copy of its
//! input. The target is
//! a trailing-window moving average so the single-direction block faces no
//! unlearnable future dependence and all three kinds share one task and
//! one exit threshold; the bidirectional kinds simply get to use future
//! context as extra signal. Small and CPU-fast, but it drives the real
//! backward pass of every parameter.

use std::fmt::Write as _;

use crate::blocks::config::{build_block, BlockConfig, BlockKind};
use crate::error::{Error, Result};
use crate::num::array::Array;
use crate::num::rng::Rng;

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub kind: BlockKind,
    pub seed: u64,
    pub steps: usize,
    /// Sequence length of the one training batch.
    pub m: usize,
    pub d: usize,
    pub e: usize,
    pub n: usize,
    pub conv_width: usize,
    pub lr: f64,
    /// Heavy-ball momentum coefficient; 0.0 recovers plain descent.
    pub momentum: f64,
    /// Trailing-average window of the target.
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            kind: BlockKind::Dbm,
            seed: 7,
            steps: 200,
            m: 32,
            d: 8,
            e: 2,
            n: 16,
            conv_width: 4,
            lr: 2.0,
            momentum: 0.9,
            window: 9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// `steps + 1` entries; `losses[0]` is the untrained loss.
    pub losses: Vec<f64>,
}

impl TrainResult {
    pub fn initial(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

/// `target[t] = mean(x[t+1-window ..= t])` per channel, truncated at the
/// left edge.
pub fn causal_smooth(x: &Array, window: usize) -> Array {
    let (m, d) = (x.shape()[0], x.shape()[1]);
    let mut out = vec![0.0; m * d];
    for t in 0..m {
        let lo = (t + 1).saturating_sub(window);
        let span = (t - lo + 1) as f64;
        for j in 0..d {
            let mut acc = 0.0;
            for s in lo..=t {
                acc += x.at(&[s, j]);
            }
            out[t * d + j] = acc / span;
        }
    }
    Array::from_vec_unchecked(vec![m, d], out)
}

fn mse(out: &Array, target: &Array) -> f64 {
    let n = out.len() as f64;
    out.data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

fn mse_cotangent(out: &Array, target: &Array) -> Array {
    let n = out.len() as f64;
    let data = out
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| 2.0 * (a - b) / n)
        .collect();
    Array::from_vec_unchecked(out.shape().to_vec(), data)
}

/// Full-batch gradient descent; per-step losses are deterministic for a
/// fixed config. Any non-finite value hit during training surfaces as
/// [`Error::DivergedLoss`] with the step that produced it.
pub fn toy_train(cfg: &TrainConfig) -> Result<TrainResult> {
    if cfg.m == 0 || cfg.window == 0 {
        return Err(Error::InvalidConfig(
            "toy_train needs a non-empty sequence and window".to_string(),
        ));
    }
    let block_cfg = BlockConfig {
        kind: cfg.kind,
        d: cfg.d,
        e: cfg.e,
        n: cfg.n,
        conv_width: cfg.conv_width,
        seed: cfg.seed,
    };
    let mut block = build_block(&block_cfg)?;
    let mut rng = Rng::new(cfg.seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
    let x = Array::from_vec(vec![cfg.m, cfg.d], rng.uniform_vec(cfg.m * cfg.d, -1.0, 1.0))?;
    let target = causal_smooth(&x, cfg.window);

    let diverged = |step: usize| Error::DivergedLoss { step };
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    let out = block.forward(&x).map_err(|_| diverged(0))?;
    let initial = mse(&out, &target);
    if !initial.is_finite() {
        return Err(diverged(0));
    }
    losses.push(initial);

    let mut velocity = vec![0.0; block.param_len()];
    for step in 1..=cfg.steps {
        let out = block.forward(&x).map_err(|_| diverged(step))?;
        let cot = mse_cotangent(&out, &target);
        let (_, grads) = block.backward(&x, &cot).map_err(|_| diverged(step))?;
        let mut flat = block.params_flat();
        for ((p, g), v) in flat.iter_mut().zip(&grads).zip(&mut velocity) {
            *v = cfg.momentum * *v - cfg.lr * g;
            *p += *v;
        }
        block = block.with_params_flat(&flat).map_err(|_| diverged(step))?;
        let loss = mse(&block.forward(&x).map_err(|_| diverged(step))?, &target);
        if !loss.is_finite() {
            return Err(diverged(step));
        }
        losses.push(loss);
    }
    Ok(TrainResult { losses })
}

/// `step,loss` rows; losses printed in shortest round-trip form so the
/// file is bit-reproducible.
pub fn loss_csv(result: &TrainResult) -> String {
    let mut out = String::from("step,loss\n");
    for (step, loss) in result.losses.iter().enumerate() {
        writeln!(out, "{step},{loss}").expect("writing to String cannot fail");
    }
    out
}

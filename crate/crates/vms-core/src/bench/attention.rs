//! Quadratic-cost attention reference: materializes the full M x M score
//! matrix, which is exactly the working set that makes long sequences
//! infeasible and the scaling comparison meaningful.

use crate::error::{Error, Result};
use crate::num::array::{matmul, Array};

/// `softmax(Q K^T / sqrt(d)) V`, then the output projection. Weights are
/// `[out, in]`; rows of the score matrix are max-shifted before
/// exponentiation.
pub fn attention_naive(x: &Array, wq: &Array, wk: &Array, wv: &Array, wo: &Array) -> Result<Array> {
    if x.ndim() != 2 || x.shape()[0] == 0 {
        return Err(Error::ShapeMismatch(format!(
            "attention: x must be [M >= 1, D], got {:?}",
            x.shape()
        )));
    }
    let d = x.shape()[1];
    for (name, w) in [("Wq", wq), ("Wk", wk), ("Wv", wv), ("Wo", wo)] {
        if w.shape() != [d, d] {
            return Err(Error::ShapeMismatch(format!(
                "attention: {name} must be [{d}, {d}], got {:?}",
                w.shape()
            )));
        }
    }
    let m = x.shape()[0];
    let q = matmul(x, &wq.transpose())?;
    let k = matmul(x, &wk.transpose())?;
    let v = matmul(x, &wv.transpose())?;
    let scale = 1.0 / (d as f64).sqrt();
    let scores = matmul(&q, &k.transpose())?.scale(scale)?;
    let mut weights = scores.data().to_vec();
    for row in weights.chunks_mut(m) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for s in row.iter_mut() {
            *s = (*s - max).exp();
            denom += *s;
        }
        for s in row.iter_mut() {
            *s /= denom;
        }
    }
    let mixed = matmul(&Array::from_vec_unchecked(vec![m, m], weights), &v)?;
    matmul(&mixed, &wo.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::Rng;
    use crate::oracle;

    fn weights(rng: &mut Rng, d: usize) -> [Array; 4] {
        let bound = 1.0 / (d as f64).sqrt();
        std::array::from_fn(|_| {
            Array::from_vec(vec![d, d], rng.uniform_vec(d * d, -bound, bound)).unwrap()
        })
    }

    #[test]
    fn single_token_skips_mixing() {
        let mut rng = Rng::new(1);
        let d = 4;
        let [wq, wk, wv, wo] = weights(&mut rng, d);
        let x = Array::from_vec(vec![1, d], rng.uniform_vec(d, -1.0, 1.0)).unwrap();
        let out = attention_naive(&x, &wq, &wk, &wv, &wo).unwrap();
        // Softmax over one key is 1, so out = Wo (Wv x0) independent of Q, K.
        let want = matmul(&matmul(&x, &wv.transpose()).unwrap(), &wo.transpose()).unwrap();
        assert!(oracle::rel_err(&out, &want) < 1e-15);
    }

    #[test]
    fn zero_key_projection_gives_uniform_weights() {
        let mut rng = Rng::new(2);
        let (m, d) = (6, 4);
        let [wq, _, wv, wo] = weights(&mut rng, d);
        let wk = Array::zeros(vec![d, d]);
        let x = Array::from_vec(vec![m, d], rng.uniform_vec(m * d, -1.0, 1.0)).unwrap();
        let out = attention_naive(&x, &wq, &wk, &wv, &wo).unwrap();
        // Every score is zero, so each row mixes the mean value vector.
        let v = matmul(&x, &wv.transpose()).unwrap();
        let mut mean = vec![0.0; d];
        for t in 0..m {
            for j in 0..d {
                mean[j] += v.at(&[t, j]) / m as f64;
            }
        }
        let mixed = Array::from_vec(vec![1, d], mean).unwrap();
        let want = matmul(&mixed, &wo.transpose()).unwrap();
        for t in 0..m {
            for j in 0..d {
                assert!((out.at(&[t, j]) - want.at(&[0, j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_direct_summation_oracle() {
        let mut rng = Rng::new(3);
        let (m, d) = (5, 4);
        let [wq, wk, wv, wo] = weights(&mut rng, d);
        let x = Array::from_vec(vec![m, d], rng.uniform_vec(m * d, -1.0, 1.0)).unwrap();
        let got = attention_naive(&x, &wq, &wk, &wv, &wo).unwrap();
        let want = oracle::attention_direct(&x, &wq, &wk, &wv, &wo);
        assert!(oracle::rel_err(&got, &want) < 1e-12);
    }

    #[test]
    fn rejects_empty_or_mismatched() {
        let mut rng = Rng::new(4);
        let [wq, wk, wv, wo] = weights(&mut rng, 4);
        let empty = Array::zeros(vec![0, 4]);
        assert!(attention_naive(&empty, &wq, &wk, &wv, &wo).is_err());
        let x = Array::zeros(vec![3, 4]);
        let bad = Array::zeros(vec![4, 5]);
        assert!(attention_naive(&x, &bad, &wk, &wv, &wo).is_err());
    }
}

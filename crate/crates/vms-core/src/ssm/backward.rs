//! Reverse-mode gradients of the selective scan, derived by hand from the
//! per-step forward equations and checked against central finite
//! differences.
//!
//! Forward, per step t (see `selective.rs`):
//!
//! ```text
//! low = dt_down x_t                 q = dt_up low + dt_bias
//! delta = softplus(q)               b = b_proj x_t + b_bias
//! c = c_proj x_t + c_bias           a = -exp(a_log)        (per d, n)
//! z = delta[d] a[d,n]               a_bar = exp(z)
//! phi = (exp(z) - 1) / a            (or delta[d] when |z| < 1e-8)
//! h[d,n] = a_bar h_prev[d,n] + phi b[n] x_t[d]
//! y[t,d] = sum_n c[n] h[d,n] + d_skip[d] x_t[d]
//! ```
//!
//! Reverse, with dh the cotangent of h_t accumulated right to left:
//!
//! ```text
//! dh[d,n]   = dy[t,d] c[n] + dh_next[d,n] a_bar_{t+1}[d,n]
//! da_bar    = dh h_prev          db_bar = dh x_t[d]
//! dphi      = db_bar b[n]        db[n] += db_bar phi
//! dz        = da_bar a_bar
//! ddelta[d] += dz a + dphi (dphi/ddelta)   dphi/ddelta = a_bar   (1 small)
//! da[d,n]   += dz delta + dphi (delta a_bar - phi)/a             (0 small)
//! da_log    += da a                        (a = -exp(a_log) so da/da_log = a)
//! dq        = ddelta sigmoid(q)            (softplus' = sigmoid)
//! ```
//!
//! The small-|z| branch derivatives differentiate the code path actually
//! taken (phi = delta there), not the analytic limit; the two differ by
//! O(|z|) < 1e-8, invisible at the tested tolerances.

use crate::error::{Error, Result};
use crate::num::array::Array;
use crate::num::scalar::sigmoid;
use crate::ssm::selective::{forward_with_tape, SsmParams};

/// Gradients of `sum(dy * selective_scan(p, x))` with respect to the input
/// and every parameter, shaped like their primals.
#[derive(Debug, Clone)]
pub struct SsmGrads {
    pub dx: Array,
    pub da_log: Array,
    pub ddt_down: Array,
    pub ddt_up: Array,
    pub ddt_bias: Array,
    pub db_proj: Array,
    pub db_bias: Array,
    pub dc_proj: Array,
    pub dc_bias: Array,
    pub dd_skip: Array,
}

impl SsmGrads {
    /// Parameter gradients flattened in [`SsmParams::params_flat`] order
    /// (input gradient excluded; it lives in `dx`).
    pub fn flat(&self) -> Vec<f64> {
        let fields = [
            &self.da_log,
            &self.ddt_down,
            &self.ddt_up,
            &self.ddt_bias,
            &self.db_proj,
            &self.db_bias,
            &self.dc_proj,
            &self.dc_bias,
            &self.dd_skip,
        ];
        let mut out = Vec::with_capacity(fields.iter().map(|a| a.len()).sum());
        for f in fields {
            out.extend_from_slice(f.data());
        }
        out
    }
}

/// Exact reverse-mode pass. Reruns the forward internally to rebuild the
/// intermediates, then walks the recurrence right to left.
pub fn selective_scan_backward(p: &SsmParams, x: &Array, dy: &Array) -> Result<SsmGrads> {
    if dy.shape() != x.shape() {
        return Err(Error::ShapeMismatch(format!(
            "selective_scan_backward: dy {:?} vs x {:?}",
            dy.shape(),
            x.shape()
        )));
    }
    let tape = forward_with_tape(p, x)?;
    let (m, d, n, r) = (x.shape()[0], p.d_inner(), p.state_dim(), p.dt_rank());

    let mut dx = vec![0.0; m * d];
    let mut da_log = vec![0.0; d * n];
    let mut ddt_down = vec![0.0; r * d];
    let mut ddt_up = vec![0.0; d * r];
    let mut ddt_bias = vec![0.0; d];
    let mut db_proj = vec![0.0; n * d];
    let mut db_bias = vec![0.0; n];
    let mut dc_proj = vec![0.0; n * d];
    let mut dc_bias = vec![0.0; n];
    let mut dd_skip = vec![0.0; d];

    // Cotangent of h_t arriving from step t+1, already times a_bar_{t+1}.
    let mut dcarry = vec![0.0; d * n];
    let mut ddelta = vec![0.0; d];
    let mut db_t = vec![0.0; n];
    let mut dc_t = vec![0.0; n];
    let mut dlow = vec![0.0; r];

    for t in (0..m).rev() {
        ddelta.fill(0.0);
        db_t.fill(0.0);
        dc_t.fill(0.0);
        for di in 0..d {
            let dyv = dy.data()[t * d + di];
            let xv = x.data()[t * d + di];
            let dt = tape.delta.data()[t * d + di];
            dd_skip[di] += dyv * xv;
            dx[t * d + di] += dyv * p.d_skip.data()[di];
            for ni in 0..n {
                let idx = (t * d + di) * n + ni;
                let cv = tape.c_t.data()[t * n + ni];
                let bv = tape.b_t.data()[t * n + ni];
                let hv = tape.h.data()[idx];
                let h_prev = if t > 0 { tape.h.data()[idx - d * n] } else { 0.0 };
                dc_t[ni] += dyv * hv;
                let dh = dyv * cv + dcarry[di * n + ni];
                let ab = tape.a_bar.data()[idx];
                let ph = tape.phi.data()[idx];
                let da_bar = dh * h_prev;
                let db_bar = dh * xv;
                dx[t * d + di] += dh * (ph * bv);
                let dph = db_bar * bv;
                db_t[ni] += db_bar * ph;
                let av = -p.a_log.data()[di * n + ni].exp();
                let z = dt * av;
                let dz = da_bar * ab;
                let mut dav = dz * dt;
                ddelta[di] += dz * av;
                if z.abs() < 1e-8 {
                    ddelta[di] += dph;
                } else {
                    ddelta[di] += dph * ab;
                    dav += dph * (dt * ab - ph) / av;
                }
                da_log[di * n + ni] += dav * av;
                dcarry[di * n + ni] = dh * ab;
            }
        }
        // Through delta = softplus(q), q = dt_up low + dt_bias.
        dlow.fill(0.0);
        for di in 0..d {
            let dq = ddelta[di] * sigmoid(tape.q.data()[t * d + di]);
            ddt_bias[di] += dq;
            for j in 0..r {
                ddt_up[di * r + j] += dq * tape.low.data()[t * r + j];
                dlow[j] += dq * p.dt_up.data()[di * r + j];
            }
        }
        for j in 0..r {
            for k in 0..d {
                ddt_down[j * d + k] += dlow[j] * x.data()[t * d + k];
                dx[t * d + k] += dlow[j] * p.dt_down.data()[j * d + k];
            }
        }
        // Through the B and C projections.
        for ni in 0..n {
            db_bias[ni] += db_t[ni];
            dc_bias[ni] += dc_t[ni];
            for k in 0..d {
                db_proj[ni * d + k] += db_t[ni] * x.data()[t * d + k];
                dx[t * d + k] += db_t[ni] * p.b_proj.data()[ni * d + k];
                dc_proj[ni * d + k] += dc_t[ni] * x.data()[t * d + k];
                dx[t * d + k] += dc_t[ni] * p.c_proj.data()[ni * d + k];
            }
        }
    }

    Ok(SsmGrads {
        dx: Array::from_vec(vec![m, d], dx)?,
        da_log: Array::from_vec(vec![d, n], da_log)?,
        ddt_down: Array::from_vec(vec![r, d], ddt_down)?,
        ddt_up: Array::from_vec(vec![d, r], ddt_up)?,
        ddt_bias: Array::from_vec(vec![d], ddt_bias)?,
        db_proj: Array::from_vec(vec![n, d], db_proj)?,
        db_bias: Array::from_vec(vec![n], db_bias)?,
        dc_proj: Array::from_vec(vec![n, d], dc_proj)?,
        dc_bias: Array::from_vec(vec![n], dc_bias)?,
        dd_skip: Array::from_vec(vec![d], dd_skip)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::Rng;
    use crate::oracle;
    use crate::ssm::selective::selective_scan;

    fn contraction(p: &SsmParams, x: &Array, dy: &Array) -> f64 {
        let y = selective_scan(p, x).unwrap();
        y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
    }

    /// Splits the combined [params..., x...] flat point back into pieces.
    fn eval_at(template: &SsmParams, x_shape: &[usize], dy: &Array, flat: &[f64]) -> f64 {
        let np = template.param_len();
        let p = template.with_params_flat(&flat[..np]).unwrap();
        let x = Array::from_vec(x_shape.to_vec(), flat[np..].to_vec()).unwrap();
        contraction(&p, &x, dy)
    }

    #[test]
    fn zero_cotangent_gives_zero_grads() {
        let mut rng = Rng::new(2);
        let p = SsmParams::init(3, 4, 2, &mut rng);
        let x = Array::from_vec(vec![5, 3], rng.uniform_vec(15, -1.0, 1.0)).unwrap();
        let dy = Array::zeros(vec![5, 3]);
        let g = selective_scan_backward(&p, &x, &dy).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
        assert!(g.dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_c_gradient_is_state() {
        // M=1: y_0[d] = c[n] h_1[d,n] + ..., so d y / d c_bias[n] = sum_d h_1[d,n].
        let mut rng = Rng::new(7);
        let p = SsmParams::init(2, 3, 1, &mut rng);
        let x = Array::from_vec(vec![1, 2], vec![0.7, -0.4]).unwrap();
        let dy = Array::filled(vec![1, 2], 1.0);
        let g = selective_scan_backward(&p, &x, &dy).unwrap();
        let flat: Vec<f64> = p.params_flat().iter().chain(x.data()).copied().collect();
        let fd = oracle::finite_difference_grad(
            |f| eval_at(&p, &[1, 2], &dy, f),
            &flat,
            1e-5,
        );
        // c_bias occupies a known offset in params_flat order.
        let off = p.a_log.len()
            + p.dt_down.len()
            + p.dt_up.len()
            + p.dt_bias.len()
            + p.b_proj.len()
            + p.b_bias.len()
            + p.c_proj.len();
        let fd_c_bias = &fd[off..off + 3];
        let err = oracle::rel_err_vec(fd_c_bias, g.dc_bias.data(), 1e-2);
        assert!(err < 1e-6, "c_bias grad err {err}");
    }

    #[test]
    fn matches_finite_differences_across_seeds() {
        for seed in 0..10u64 {
            let mut rng = Rng::new(1000 + seed);
            let p = SsmParams::init(2, 3, 1, &mut rng);
            let (m, d) = (6, 2);
            let x = Array::from_vec(vec![m, d], rng.uniform_vec(m * d, -1.0, 1.0)).unwrap();
            let dy = Array::from_vec(vec![m, d], rng.uniform_vec(m * d, -1.0, 1.0)).unwrap();
            let g = selective_scan_backward(&p, &x, &dy).unwrap();
            let flat: Vec<f64> = p.params_flat().iter().chain(x.data()).copied().collect();
            let fd = oracle::finite_difference_grad(
                |f| eval_at(&p, &[m, d], &dy, f),
                &flat,
                1e-5,
            );
            let an: Vec<f64> = g.flat().iter().chain(g.dx.data()).copied().collect();
            // Compare group by group so one large-norm group cannot mask
            // another group's error.
            let sizes = [
                ("a_log", p.a_log.len()),
                ("dt_down", p.dt_down.len()),
                ("dt_up", p.dt_up.len()),
                ("dt_bias", p.dt_bias.len()),
                ("b_proj", p.b_proj.len()),
                ("b_bias", p.b_bias.len()),
                ("c_proj", p.c_proj.len()),
                ("c_bias", p.c_bias.len()),
                ("d_skip", p.d_skip.len()),
                ("x", m * d),
            ];
            let mut off = 0;
            for (name, len) in sizes {
                let err = oracle::rel_err_vec(&fd[off..off + len], &an[off..off + len], 1e-2);
                assert!(err < 1e-6, "seed {seed}, group {name}: rel err {err}");
                off += len;
            }
            assert_eq!(off, an.len());
        }
    }

    #[test]
    fn rejects_mismatched_cotangent() {
        let mut rng = Rng::new(3);
        let p = SsmParams::init(2, 2, 1, &mut rng);
        let x = Array::zeros(vec![4, 2]);
        let dy = Array::zeros(vec![3, 2]);
        assert!(matches!(
            selective_scan_backward(&p, &x, &dy),
            Err(Error::ShapeMismatch(_))
        ));
    }
}

//! Scalar activations shared by the blocks, with the derivative forms the
//! hand-written backward passes rely on.

/// Overflow-safe softplus: `ln(1 + e^x)` evaluated as
/// `max(x, 0) + ln(1 + e^-|x|)` so large positive x returns x itself
/// instead of overflowing `e^x`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of softplus for y > 0: `ln(e^y - 1)`, evaluated stably as
/// `y + ln(1 - e^-y)`.
pub fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    y + (-(-y).exp_m1()).ln()
}

/// Logistic sigmoid, branch-stable on both tails.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// SiLU (swish): `x * sigmoid(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// d/dx silu(x) = sigmoid(x) * (1 + x * (1 - sigmoid(x))).
pub fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Hyperbolic tangent (thin wrapper so all activations live in one place).
pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

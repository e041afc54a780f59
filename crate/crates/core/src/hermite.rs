//! Normalized Hermite functions `ψ_n(y) = (2ⁿ n! √π)^(-1/2) e^(-y²/2) H_n(y)`.
//!
//! The Gaussian is folded into the three-term recurrence, so the iterates stay
//! O(1) instead of growing like `H_n`. A running power-of-two scale absorbs
//! the remaining dynamic range, which keeps `e^(-y²/2)` from underflowing for
//! large `|y|` before the polynomial part has had a chance to grow.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use serde::{Deserialize, Serialize};

/// Oscillator quantum number `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisIndex(pub usize);

impl BasisIndex {
    /// Transverse threshold `ν_n = n + ½`.
    pub fn nu(self) -> f64 {
        self.0 as f64 + 0.5
    }
}

impl From<usize> for BasisIndex {
    fn from(n: usize) -> Self {
        BasisIndex(n)
    }
}

const RESCALE_EXP: i32 = 500;

/// `x · 2^e` without overflowing or underflowing an intermediate power.
fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

/// Runs the normalized recurrence up to `n_max`, handing each `(n, value)`
/// to `sink` with the Gaussian already applied.
///
/// The scale is split as `e^r · 2^q` with `r ∈ [0, ln 2)`. Only `e^r` is
/// inexact, and it is shared by every index, so neighbouring values keep the
/// exact ratios produced by the recurrence.
fn recurrence(n_max: usize, y: f64, mut sink: impl FnMut(usize, f64)) {
    let rescale = 2f64.powi(RESCALE_EXP);
    let g = -0.5 * y * y - 0.25 * PI.ln();
    let q = (g / LN_2).floor();
    let base = (g - q * LN_2).exp();
    let mut exponent = q as i64;
    let mut prev = 0.0;
    let mut cur = base;
    sink(0, ldexp(cur, exponent));
    for k in 0..n_max {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * y * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > rescale {
            cur /= rescale;
            prev /= rescale;
            exponent += RESCALE_EXP as i64;
        }
        sink(k + 1, ldexp(cur, exponent));
    }
}

/// `ψ_n(y)`.
pub fn eval_psi(n: BasisIndex, y: f64) -> f64 {
    let mut out = 0.0;
    recurrence(n.0, y, |k, v| {
        if k == n.0 {
            out = v;
        }
    });
    out
}

/// `(ψ_0(y), …, ψ_{n_max}(y))` from a single recurrence pass.
pub fn eval_psi_column(n_max: BasisIndex, y: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max.0 + 1);
    recurrence(n_max.0, y, |_, v| out.push(v));
    out
}

/// Matrix element `(ψ_m, y ψ_n)`; nonzero only for `|m − n| = 1`.
pub fn coupling_element(m: BasisIndex, n: BasisIndex) -> f64 {
    let (m, n) = (m.0, n.0);
    if m == n + 1 {
        FRAC_1_SQRT_2 * ((n + 1) as f64).sqrt()
    } else if n == m + 1 {
        FRAC_1_SQRT_2 * (n as f64).sqrt()
    } else {
        0.0
    }
}

//! Gamma-family helpers on top of `libm` (musl's `tgamma` / `lgamma`,
//! a few ulp across the range).
//!
//! The reciprocal Gamma function is the workhorse of every Mittag-Leffler
//! expansion in this crate, and it has to vanish exactly at the poles of
//! Gamma, so it is wrapped here.

use std::f64::consts::PI;


/// Largest argument for which `Γ(x)` is finite in `f64`.
const GAMMA_MAX_ARG: f64 = 171.0;

/// `sin(πx)` with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    if x == x.trunc() {
        return 0.0;
    }
    // reduce to [-1, 1)
    let r = x - 2.0 * (x / 2.0).floor();
    let r = if r >= 1.0 { r - 2.0 } else { r };
    (PI * r).sin()
}

/// True when `x` is a pole of Gamma (0, -1, -2, ...).
pub fn is_gamma_pole(x: f64) -> bool {
    x <= 0.0 && x == x.trunc()
}

pub fn gamma(x: f64) -> f64 {
    if is_gamma_pole(x) {
        return f64::NAN;
    }
    gamma_pos(x)
}

/// Gamma for positive arguments, with exact factorials at small positive integers.
fn gamma_pos(x: f64) -> f64 {
    if x == x.trunc() && x >= 1.0 && x <= 30.0 {
        return (1..x as u64).map(|k| k as f64).product();
    }
    libm::tgamma(x)
}

fn lgamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// `ln|Γ(x)|`.
pub fn ln_gamma(x: f64) -> f64 {
    if is_gamma_pole(x) {
        return f64::INFINITY;
    }
    if x > 0.0 {
        lgamma(x)
    } else {
        // reflection: |Γ(x)| = π / (|sin πx| Γ(1-x))
        PI.ln() - sin_pi(x).abs().ln() - lgamma(1.0 - x)
    }
}

/// `1/Γ(x)`, exactly zero at the poles of Gamma.
pub fn rgamma(x: f64) -> f64 {
    if is_gamma_pole(x) {
        return 0.0;
    }
    if x > GAMMA_MAX_ARG {
        return (-lgamma(x)).exp();
    }
    if x < 0.5 {
        // 1/Γ(x) = sin(πx) Γ(1-x) / π
        let g = 1.0 - x;
        let s = sin_pi(x);
        if g > GAMMA_MAX_ARG {
            let sign = s.signum();
            return sign * (s.abs().ln() + lgamma(g) - PI.ln()).exp();
        }
        return s * gamma_pos(g) / PI;
    }
    1.0 / gamma_pos(x)
}

/// Euler Beta function `B(a, b)` for positive arguments.
pub fn beta(a: f64, b: f64) -> f64 {
    (lgamma(a) + lgamma(b) - lgamma(a + b)).exp()
}

/// `Γ(a) / Γ(b)` evaluated through logarithms (both arguments positive).
pub fn gamma_ratio(a: f64, b: f64) -> f64 {
    if a < GAMMA_MAX_ARG && b < GAMMA_MAX_ARG {
        return gamma_pos(a) / gamma_pos(b);
    }
    (lgamma(a) - lgamma(b)).exp()
}

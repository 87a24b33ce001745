//! Standard normal distribution helpers used by the probit comparison model.
//!
//! `cdf` goes through `erfc`, which keeps full relative accuracy in the lower
//! tail. Below `u = -8` the log-CDF and inverse Mills ratio switch to a
//! continued fraction for the Mills ratio so that neither underflows.

use std::f64::consts::{PI, SQRT_2};

const TAIL_SWITCH: f64 = -8.0;

/// Density of N(0, 1).
pub fn pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Cumulative distribution function of N(0, 1).
pub fn cdf(u: f64) -> f64 {
    0.5 * libm::erfc(-u / SQRT_2)
}

/// Mills ratio `(1 - Phi(x)) / phi(x)` for `x > 0`, by Lentz's continued fraction.
fn mills_ratio(x: f64) -> f64 {
    // R(x) = 1 / (x + 1/(x + 2/(x + 3/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// `log Phi(u)`, finite for every finite `u`.
pub fn log_cdf(u: f64) -> f64 {
    if u < TAIL_SWITCH {
        // Phi(u) = phi(u) * R(-u)
        -0.5 * u * u - 0.5 * (2.0 * PI).ln() + mills_ratio(-u).ln()
    } else if u > 0.0 {
        (-cdf(-u)).ln_1p()
    } else {
        cdf(u).ln()
    }
}

/// Inverse Mills ratio `phi(u) / Phi(u)`, the derivative of `log Phi(u)`.
pub fn inverse_mills(u: f64) -> f64 {
    if u < TAIL_SWITCH {
        1.0 / mills_ratio(-u)
    } else {
        pdf(u) / cdf(u)
    }
}

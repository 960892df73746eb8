//! Hypothesis test on normalized residuals.
//!
//! Under the null hypothesis a normalized residual is standard normal. The
//! threshold `T` satisfies `0.5 - int_0^T p(xi) dxi = rho / 2`, i.e.
//! `erfc(T / sqrt 2) = rho`, and is solved once at configuration time.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Verdict for one post-warm-up sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flag {
    Valid = 0,
    Invalid = 1,
}

impl Flag {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityConfig {
    /// False-alarm probability.
    pub rho: f64,
    /// Threshold on `|r_N|`.
    pub threshold: f64,
}

impl ValidityConfig {
    pub fn new(rho: f64) -> Result<Self> {
        Ok(Self { rho, threshold: threshold_for(rho)? })
    }
}

/// Threshold for false-alarm probability `rho`, by bisection to 1e-12.
pub fn threshold_for(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("false-alarm probability must be in (0, 1], got {rho}")));
    }
    if rho == 1.0 {
        return Ok(0.0);
    }
    // Two-sided tail erfc(T / sqrt 2) decreases from 1 at T = 0.
    let tail = |t: f64| erfc(t / SQRT_2);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while tail(hi) > rho {
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::Config(format!("false-alarm probability {rho} too small")));
        }
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(r_hat - r_bar) / sigma`.
///
/// # Panics
/// If `sigma` is not strictly positive; the variance floor upstream makes
/// that a programming error.
#[inline]
pub fn normalize(r_hat: f64, r_bar: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0 && sigma.is_finite(), "noise standard deviation must be positive, got {sigma}");
    (r_hat - r_bar) / sigma
}

/// `|r_N| < T` is valid; ties flag invalid.
#[inline]
pub fn evaluate(r_n: f64, threshold: f64) -> Flag {
    if r_n.abs() < threshold {
        Flag::Valid
    } else {
        Flag::Invalid
    }
}

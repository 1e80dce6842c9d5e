//! Central and noncentral chi-square distribution functions.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// A chi-square reference law `χ²_{df, λ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareRef {
    pub df: u32,
    pub noncentrality: f64,
}

impl ChiSquareRef {
    pub fn central(df: u32) -> Self {
        Self { df, noncentrality: 0.0 }
    }

    pub fn noncentral(df: u32, noncentrality: f64) -> Result<Self> {
        if df == 0 {
            return Err(Error::InvalidArgument("chi-square df must be at least 1".into()));
        }
        if !(noncentrality >= 0.0 && noncentrality.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noncentrality must be finite and non-negative, got {noncentrality}"
            )));
        }
        Ok(Self { df, noncentrality })
    }
}

/// Upper tail `P(χ²_df > x)` of the central chi-square law.
pub fn chisq_sf(x: f64, df: u32) -> f64 {
    if x <= 0.0 || x.is_nan() {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(0.5 * df as f64, 0.5 * x).clamp(0.0, 1.0)
}

/// Lower tail `P(χ²_df ≤ x)` of the central chi-square law.
pub fn chisq_cdf(x: f64, df: u32) -> f64 {
    if x <= 0.0 || x.is_nan() {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    gamma_lr(0.5 * df as f64, 0.5 * x).clamp(0.0, 1.0)
}

/// `P(χ²_{df,λ} ≤ x)` as a Poisson(λ/2) mixture of central chi-square
/// distribution functions with `df + 2j` degrees of freedom.
///
/// Summation starts at the Poisson mode and walks outwards in both
/// directions; it stops once the Poisson weight not yet visited is below
/// `1e-12`.
pub fn noncentral_chisq_cdf(x: f64, r: ChiSquareRef) -> Result<f64> {
    const TAIL: f64 = 1e-12;
    const MAX_TERMS: usize = 1_000_000;
    if r.noncentrality == 0.0 {
        return Ok(chisq_cdf(x, r.df));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let mu = 0.5 * r.noncentrality;
    let half_x = 0.5 * x;
    let a0 = 0.5 * r.df as f64;
    let mode = mu.floor() as usize;
    let log_w = |j: usize| -mu + j as f64 * mu.ln() - ln_gamma(j as f64 + 1.0);

    let mut total = 0.0;
    let mut weight_seen = 0.0;
    let mut terms = 0;

    // Upwards from the mode (inclusive).
    let mut j = mode;
    loop {
        let w = log_w(j).exp();
        total += w * gamma_lr(a0 + j as f64, half_x);
        weight_seen += w;
        terms += 1;
        j += 1;
        // Poisson weights decrease geometrically past the mode; bound the
        // remaining upper tail by w * ratio / (1 - ratio).
        let ratio = mu / j as f64;
        if ratio < 1.0 && w * ratio / (1.0 - ratio) < 0.5 * TAIL {
            break;
        }
        if terms > MAX_TERMS {
            return Err(Error::Numeric(format!(
                "noncentral chi-square series did not converge within {MAX_TERMS} terms"
            )));
        }
    }
    // Downwards from mode - 1.
    let mut j = mode;
    while j > 0 {
        j -= 1;
        let w = log_w(j).exp();
        total += w * gamma_lr(a0 + j as f64, half_x);
        weight_seen += w;
        terms += 1;
        if w < 1e-6 * TAIL && (j as f64) < 0.5 * mu {
            break;
        }
        if terms > MAX_TERMS {
            return Err(Error::Numeric(format!(
                "noncentral chi-square series did not converge within {MAX_TERMS} terms"
            )));
        }
    }
    if (1.0 - weight_seen).abs() > 1e-9 {
        return Err(Error::Numeric(format!(
            "noncentral chi-square Poisson weights sum to {weight_seen}"
        )));
    }
    Ok(total.clamp(0.0, 1.0))
}

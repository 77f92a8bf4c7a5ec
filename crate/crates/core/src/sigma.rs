//! The generalized sigmoid `sigma_K(x) = e^x / (K - 1 + e^x)` and its inverse.
//!
//! `sigma_K(beta)` is the probability that an agent of ability `beta` picks the
//! correct label among `K` when its errors are spread uniformly; the inverse
//! turns an accuracy into the Bayes-optimal vote weight.

use crate::error::{Error, Result};

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Domain(format!(
            "label count must be at least 2, got {k}"
        )));
    }
    Ok(())
}

pub fn sigma_k(x: f64, k: usize) -> Result<f64> {
    check_k(k)?;
    if x.is_nan() {
        return Err(Error::Domain("sigma_K of NaN".into()));
    }
    if !x.is_finite() {
        return Err(Error::Domain(format!("sigma_K of non-finite {x}")));
    }
    Ok(sigma_k_unchecked(x, k))
}

/// Like [`sigma_k`] but accepts `+inf` (returns 1) and skips validation.
pub(crate) fn sigma_k_unchecked(x: f64, k: usize) -> f64 {
    let km1 = (k - 1) as f64;
    if x >= 0.0 {
        1.0 / (1.0 + km1 * (-x).exp())
    } else {
        let e = x.exp();
        e / (km1 + e)
    }
}

/// `ln((K - 1) p / (1 - p))`. Callers clamp `p` first.
pub fn sigma_k_inverse(p: f64, k: usize) -> Result<f64> {
    check_k(k)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "inverse sigma_K needs a probability strictly inside (0, 1), got {p}"
        )));
    }
    Ok(((k - 1) as f64).ln() + p.ln() - (-p).ln_1p())
}

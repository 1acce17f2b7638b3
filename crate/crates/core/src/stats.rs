//! Small numerical helpers shared across modules.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile, with one Halley step on top of `erfc_inv`.
pub fn norm_quantile(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // refine on the tail that keeps the residual small
    let e = if x < 0.0 { norm_cdf(x) - p } else { (1.0 - p) - norm_cdf(-x) };
    let d = norm_pdf(x);
    if d <= 0.0 {
        return x;
    }
    let u = e / d;
    x - u / (1.0 + 0.5 * x * u)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Variance of a standard normal truncated to [-c, c].
pub fn truncated_std_normal_variance(c: f64) -> f64 {
    1.0 - 2.0 * c * norm_pdf(c) / (2.0 * norm_cdf(c) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_helpers() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((norm_cdf(norm_quantile(0.123)) - 0.123).abs() < 1e-14);
        assert!((expit(-1.0) - 0.2689414213699951).abs() < 1e-15);
        assert!((expit(800.0) - 1.0).abs() < 1e-15 && expit(-800.0) >= 0.0);
        assert!((truncated_std_normal_variance(3.0) - 0.973336).abs() < 1e-6);
    }
}

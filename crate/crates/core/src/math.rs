//! Scalar normal-distribution helpers and log-space accumulation.

use crate::error::{Error, Result};
use statrs::function::erf;

/// log(2π), the constant term of the Gaussian log-density.
pub const LOG_2PI: f64 = 1.8378770664093453;

/// Standard normal CDF Φ(x), evaluated through the complementary error
/// function for accuracy in both tails.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Log-density of N(mean, var) at x. `var` must be positive.
#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LOG_2PI + var.ln() + d * d / var)
}

/// Standard normal quantile: the x with Φ(x) = p.
///
/// Rational-approximation initial guess refined by one Newton step against
/// the erf-based CDF; absolute error is far below the 1e-9 contract on the
/// whole open interval.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::QuantileDomain(p));
    }
    let x = rational_guess(p);
    // Newton: x - (Φ(x) - p) / φ(x).
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(x - (normal_cdf(x) - p) / pdf)
}

/// Piecewise rational approximation to Φ^{-1} (absolute error ~1e-9 on its
/// own; the Newton polish in `normal_quantile` tightens it further).
fn rational_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// log(Σ exp(v_i)) with max subtraction. Returns -inf for an empty slice or
/// when every entry is -inf.
pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return f64::NEG_INFINITY;
    }
    let s: f64 = v.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent quantile oracle: bisection on the erf-based CDF.
    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-12.0_f64, 12.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_half_is_zero() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_matches_published_values() {
        assert!((normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-6);
        assert!((normal_quantile(0.25).unwrap() - (-0.674490)).abs() < 1e-6);
        assert!((normal_quantile(0.75).unwrap() - 0.6744897501960817).abs() < 1e-10);
    }

    #[test]
    fn quantile_matches_bisection_oracle() {
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let q = normal_quantile(p).unwrap();
            assert!(
                (q - bisect_quantile(p)).abs() < 1e-10,
                "p={p}: {q} vs oracle"
            );
        }
    }

    #[test]
    fn quantile_round_trip() {
        for i in 1..=999 {
            let p = i as f64 / 1000.0;
            let q = normal_quantile(p).unwrap();
            assert!((normal_cdf(q) - p).abs() <= 1e-9, "p={p}");
        }
    }

    #[test]
    fn quantile_rejects_boundary() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(-0.2).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn log_pdf_standard_normal_at_zero() {
        assert!((log_normal_pdf(0.0, 0.0, 1.0) + 0.5 * LOG_2PI).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_handles_extremes() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = [-1000.0, -1000.0];
        assert!((logsumexp(&v) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((logsumexp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }
}

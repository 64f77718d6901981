//! Log-space helpers and standard-normal tail functions.

use std::f64::consts::SQRT_2;

/// `0.5 * ln(2π)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Numerically stable `ln Σ exp(x_i)`. Returns `-inf` for an empty slice or
/// when every entry is `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// `ln(exp(a) + exp(b))`
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Softmax of `xs` written into a new vector.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = logsumexp(xs);
    xs.iter().map(|&x| (x - lse).exp()).collect()
}

/// Log density of the standard normal.
#[inline]
pub fn std_normal_logpdf(z: f64) -> f64 {
    -0.5 * z * z - HALF_LN_2PI
}

/// Mills ratio `Q(z) / φ(z)` for large positive `z`, by backward evaluation of
/// the Laplace continued fraction.
fn mills_ratio_cf(z: f64) -> f64 {
    let mut t = 0.0;
    for k in (1..=80).rev() {
        t = k as f64 / (z + t);
    }
    1.0 / (z + t)
}

/// `ln Q(z)` where `Q` is the standard normal survival function.
///
/// Three regimes: `log1p` of the lower tail for `z < -1`, direct `erfc` in the
/// body, and the continued-fraction Mills ratio beyond `z = 5` where `erfc`
/// would eventually underflow. Accurate far past `|z| = 38`.
pub fn std_normal_log_survival(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < -1.0 {
        (-0.5 * libm::erfc(-z / SQRT_2)).ln_1p()
    } else if z <= 5.0 {
        (0.5 * libm::erfc(z / SQRT_2)).ln()
    } else {
        std_normal_logpdf(z) + mills_ratio_cf(z).ln()
    }
}

/// Hazard `φ(z) / Q(z)` of the standard normal.
pub fn std_normal_hazard(z: f64) -> f64 {
    if z > 5.0 {
        1.0 / mills_ratio_cf(z)
    } else {
        (std_normal_logpdf(z) - std_normal_log_survival(z)).exp()
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance. Zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `ln n!`
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn logsumexp_handles_extremes() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_relative_eq!(logsumexp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln());
        assert_relative_eq!(logsumexp(&[-1000.0, -1000.0]), -1000.0 + 2f64.ln());
        assert_relative_eq!(logaddexp(0.0, 0.0), 2f64.ln());
    }

    #[test]
    fn log_survival_matches_erfc_where_erfc_is_accurate() {
        for &z in &[-6.0, -2.0, -0.5, 0.0, 0.7, 3.0, 5.0, 5.5, 7.0, 9.0, 12.0] {
            let direct = (0.5 * libm::erfc(z / SQRT_2)).ln();
            assert_relative_eq!(std_normal_log_survival(z), direct, max_relative = 1e-12);
        }
        assert_eq!(std_normal_log_survival(0.0), 0.5f64.ln());
    }

    #[test]
    fn log_survival_far_tail_is_finite_and_asymptotic() {
        // ln Q(z) ~ ln φ(z) - ln z for large z
        for &z in &[38.0, 40.0, 100.0] {
            let v = std_normal_log_survival(z);
            assert!(v.is_finite());
            let asym = std_normal_logpdf(z) - f64::ln(z) + (-1.0 / (z * z)).ln_1p();
            assert_relative_eq!(v, asym, max_relative = 1e-8);
        }
        assert!(std_normal_log_survival(-40.0) == 0.0);
    }

    #[test]
    fn hazard_is_continuous_across_regimes() {
        let a = std_normal_hazard(5.0 - 1e-9);
        let b = std_normal_hazard(5.0 + 1e-9);
        assert_relative_eq!(a, b, max_relative = 1e-8);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [8.0, 16.0, 32.0, 64.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert_relative_eq!(log_log_slope(&xs, &ys), 2.0, epsilon = 1e-12);
    }
}

use crate::error::{Error, Result};
use crate::stats::ln_binomial_cdf;

/// Smallest ε with `P(Bin(n, ε) ≤ k - 1) ≤ β`: with confidence `1 - β`, a
/// convex program with support count `k` fitted on `n` scenarios has
/// violation probability at most ε.
pub fn campi_violation_bound(n: u64, k: u64, beta: f64) -> Result<f64> {
    if k < 1 || n <= k {
        return Err(Error::range("n", n as f64, format!("need n > k >= 1 (k = {k})")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::range("beta", beta, "must lie in (0, 1)"));
    }
    let target = beta.ln();
    // The binomial tail is decreasing in ε; bisect on a log scale so tiny
    // bounds keep their relative precision.
    let (mut lo, mut hi) = (1e-300f64, 1.0f64);
    while hi - lo > 1e-12 * hi {
        let mid = (lo.ln() + 0.5 * (hi.ln() - lo.ln())).exp();
        if mid <= lo || mid >= hi {
            break;
        }
        if ln_binomial_cdf(n, k - 1, mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_support_closed_form() {
        for (n, beta) in [(1000u64, 1e-6), (40_000, 0.01), (10, 0.5)] {
            let eps = campi_violation_bound(n, 1, beta).unwrap();
            let closed = -(beta.ln() / n as f64).exp_m1();
            assert!((eps / closed - 1.0).abs() < 1e-10, "{n}: {eps} vs {closed}");
        }
        let eps = campi_violation_bound(1000, 1, 1e-6).unwrap();
        assert!((eps - 0.013718).abs() < 5e-6);
        let eps = campi_violation_bound(40_000, 1, 0.01).unwrap();
        assert!((eps - 1.15e-4).abs() < 1e-6);
    }

    #[test]
    fn bound_shrinks_with_data_and_grows_with_support() {
        let mut prev = 1.0;
        for n in [50u64, 100, 500, 1000, 10_000] {
            let eps = campi_violation_bound(n, 8, 1e-6).unwrap();
            assert!(eps < prev);
            prev = eps;
        }
        let a = campi_violation_bound(500, 3, 0.01).unwrap();
        let b = campi_violation_bound(500, 12, 0.01).unwrap();
        assert!(b > a);
    }

    #[test]
    fn tail_at_bound_equals_beta() {
        let eps = campi_violation_bound(500, 10, 0.01).unwrap();
        let tail = ln_binomial_cdf(500, 9, eps).exp();
        assert!((tail / 0.01 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn preconditions() {
        assert!(campi_violation_bound(5, 5, 0.1).is_err());
        assert!(campi_violation_bound(5, 0, 0.1).is_err());
        assert!(campi_violation_bound(5, 1, 1.0).is_err());
    }
}

//! Tail probabilities and quantiles used by the region radii and bounds.

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_ur, ln_gamma};

/// Two-sided standard normal tail `P(|Z| > r)`.
pub fn normal_two_sided_tail(r: f64) -> f64 {
    erfc(r / std::f64::consts::SQRT_2)
}

/// Upper tail of the chi-square distribution, `P(X > x)` with `dof` degrees.
pub fn chi_square_sf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, x / 2.0)
}

/// `x` such that `P(X > x) = tail` for a chi-square with `dof` degrees.
/// Two degrees of freedom use the closed form `-2 ln(tail)`.
pub fn chi_square_upper_quantile(dof: usize, tail: f64) -> f64 {
    debug_assert!(tail > 0.0 && tail < 1.0 && dof >= 1);
    if dof == 2 {
        return -2.0 * tail.ln();
    }
    let mut hi = dof as f64 + 10.0;
    while chi_square_sf(dof, hi) > tail {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    // The survival function is monotone; bisect in x, comparing in log space
    // so tiny tails keep full relative precision.
    let target = tail.ln();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_sf(dof, mid).ln() > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `ln P(Bin(n, p) <= k_max)` by log-sum-exp over the terms.
pub fn ln_binomial_cdf(n: u64, k_max: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return if k_max >= n { 0.0 } else { f64::NEG_INFINITY };
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let terms: Vec<f64> = (0..=k_max.min(n))
        .map(|i| ln_choose(n, i) + i as f64 * lp + (n - i) as f64 * lq)
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

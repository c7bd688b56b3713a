use statrs::function::factorial::ln_binomial;

use super::StatsError;

fn pmf(k: u64, n: u64, p: f64) -> f64 {
    (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// Exact two-sided binomial test.
///
/// Sums the probabilities of every outcome no more likely than the observed
/// one (with the usual `1 + 1e-7` relative slack for ties in floating point).
/// At `p0 = 0.5` this is the doubled one-sided tail.
pub fn binomial_test(successes: u64, n: u64, p0: f64) -> Result<f64, StatsError> {
    if successes > n || !(p0 > 0.0 && p0 < 1.0) {
        return Err(StatsError::InvalidCounts { successes, n, p0 });
    }
    let observed = pmf(successes, n, p0);
    let cutoff = observed * (1.0 + 1e-7);
    let (mut tail, mut total) = (0.0, 0.0);
    for k in 0..=n {
        let q = pmf(k, n, p0);
        total += q;
        if q <= cutoff {
            tail += q;
        }
    }
    // Normalizing by the summed mass removes rounding drift in the pmf terms.
    Ok((tail / total).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(binomial_test(20, 40, 0.5).unwrap(), 1.0);
        // 2 * P(X >= 26), X ~ Bin(40, 1/2)
        assert!((binomial_test(26, 40, 0.5).unwrap() - 0.080_690_5).abs() < 1e-6);
        assert!((binomial_test(22, 40, 0.5).unwrap() - 0.635_828_0).abs() < 1e-6);
        // Asymmetric null: scipy.stats.binomtest(3, 10, 0.1) -> 0.07019
        assert!((binomial_test(3, 10, 0.1).unwrap() - 0.070_190_8).abs() < 1e-6);
    }

    #[test]
    fn invalid_arguments() {
        assert!(binomial_test(5, 4, 0.5).is_err());
        assert!(binomial_test(1, 4, 0.0).is_err());
        assert!(binomial_test(1, 4, 1.0).is_err());
    }

    #[test]
    fn zero_trials() {
        assert_eq!(binomial_test(0, 0, 0.5).unwrap(), 1.0);
    }
}

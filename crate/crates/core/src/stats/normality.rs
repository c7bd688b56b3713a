//! One-sample Kolmogorov-Smirnov test against a Gaussian fitted by moments.

use statrs::distribution::{ContinuousCDF, Normal};

/// Asymptotic Kolmogorov survival function `Q(λ) = 2 Σ (-1)^(j-1) exp(-2 j² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Largest gap between the empirical CDF of `values` and `cdf`.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalityResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// KS test of `values` against N(mean, sd) with the sample mean and sample
/// standard deviation. `None` when fewer than two values or zero spread.
pub fn ks_normality(values: &[f64]) -> Option<NormalityResult> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return None;
    }
    let normal = Normal::new(mean, sd).ok()?;
    let statistic = ks_statistic(values, |x| normal.cdf(x));
    let root = n.sqrt();
    let lambda = (root + 0.12 + 0.11 / root) * statistic;
    Some(NormalityResult {
        statistic,
        p_value: kolmogorov_q(lambda).max(f64::MIN_POSITIVE),
    })
}

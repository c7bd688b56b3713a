//! Wilcoxon rank-sum (Mann-Whitney) test, two-sided.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::StatsError;

/// Largest combined sample size accepted by [`rank_sum_exact`].
pub const EXACT_MAX_TOTAL: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn check(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyGroup);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Two-sided p-value of a standard normal deviate, floored at the smallest
/// positive double so it never reports exactly zero.
pub(crate) fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Normal approximation with tie correction and a 0.5 continuity correction.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSumResult, StatsError> {
    check(a, b)?;
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let total = n1 + n2;
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&combined);
    let rank_sum: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;

    let mut sorted = combined.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = n1 * n2 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if var <= 0.0 {
        return Ok(RankSumResult {
            u,
            z: 0.0,
            p_value: 1.0,
        });
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(RankSumResult {
        u,
        z,
        p_value: two_sided_normal_p(z),
    })
}

/// Exact permutation p-value: the share of all ways to pick `|a|` of the
/// pooled midranks whose U is at least as far from its mean as observed.
pub fn rank_sum_exact(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check(a, b)?;
    let total = a.len() + b.len();
    if total > EXACT_MAX_TOTAL {
        return Err(StatsError::TooLargeForExact(total));
    }
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&combined);
    let n1 = a.len();
    let mean_sum = n1 as f64 * (total as f64 + 1.0) / 2.0;
    let observed = (ranks[..n1].iter().sum::<f64>() - mean_sum).abs();

    let (mut extreme, mut count) = (0u64, 0u64);
    for mask in 0u32..(1u32 << total) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let s: f64 = (0..total).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        count += 1;
        if (s - mean_sum).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    Ok(extreme as f64 / count as f64)
}

//! Fixture generators and reference implementations shared by integration tests.
#![allow(dead_code)]

use histoprompt_core::data::FeatureSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k` isotropic Gaussian blobs; blob `i` is centred at `10 * e_i` (pairwise
/// distance about 14). Returns the set and the blob index of every row.
pub fn blobs(per_blob: usize, d: usize, k: usize, sigma: f64, seed: u64) -> (FeatureSet, Vec<usize>) {
    assert!(k <= d);
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for blob in 0..k {
        for _ in 0..per_blob {
            let row: Vec<f64> = (0..d)
                .map(|j| if j == blob { 10.0 } else { 0.0 } + noise.sample(&mut r))
                .collect();
            rows.push(row);
            truth.push(blob);
        }
    }
    (FeatureSet::from_rows(&rows).unwrap(), truth)
}

/// Fraction of rows whose predicted cluster maps to their true blob under the
/// best one-to-one relabeling (exhaustive over permutations; k is small).
pub fn permutation_accuracy(truth: &[usize], pred: &[usize], k: usize) -> f64 {
    let mut best = 0;
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |p| {
        let hits = truth.iter().zip(pred).filter(|(t, q)| p[**q] == **t).count();
        best = best.max(hits);
    });
    best as f64 / truth.len() as f64
}

fn permute(v: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
    if i == v.len() {
        f(v);
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permute(v, i + 1, f);
        v.swap(i, j);
    }
}

pub fn random_rows(r: &mut impl Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| r.random_range(-scale..scale)).collect())
        .collect()
}

pub fn gaussian_rows(r: &mut impl Rng, n: usize, mean: &[f64], sd: f64) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, sd).unwrap();
    (0..n)
        .map(|_| mean.iter().map(|m| m + noise.sample(r)).collect())
        .collect()
}

/// Rows as stored (f32) widened back to f64.
pub fn stored_rows(fs: &FeatureSet) -> Vec<Vec<f64>> {
    fs.rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

/// Column means and (n-1)-divisor covariance by the textbook two-pass method.
pub fn two_pass_moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mu = vec![0.0; d];
    for row in rows {
        for j in 0..d {
            mu[j] += row[j];
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for row in rows {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (row[a] - mu[a]) * (row[b] - mu[b]);
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    (mu, cov)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Precision and recall from the full pairwise distance matrices: radii from
/// sorting every row of the within-set matrix, membership by scanning all pairs.
pub fn brute_force_pr(real: &[Vec<f64>], synth: &[Vec<f64>], k: usize) -> (f64, f64) {
    let radii = |set: &[Vec<f64>]| -> Vec<f64> {
        set.iter()
            .enumerate()
            .map(|(i, x)| {
                let mut ds: Vec<f64> = set
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, y)| euclid(x, y))
                    .collect();
                ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
                ds[k - 1]
            })
            .collect()
    };
    let inside = |queries: &[Vec<f64>], reference: &[Vec<f64>], r: &[f64]| -> usize {
        queries
            .iter()
            .filter(|q| reference.iter().zip(r).any(|(x, rad)| euclid(q, x) <= *rad))
            .count()
    };
    let rr = radii(real);
    let sr = radii(synth);
    (
        inside(synth, real, &rr) as f64 / synth.len() as f64,
        inside(real, synth, &sr) as f64 / real.len() as f64,
    )
}

/// Index of the nearest centroid by a plain scan; strict `<` keeps the lowest index on ties.
pub fn nearest_scan(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d: f64 = point.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

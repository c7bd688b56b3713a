//! Lloyd's k-means with k-means++ seeding.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::data::FeatureSet;
use crate::seeding;

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_N_INIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest-inertia fit wins.
    pub n_init: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            n_init: DEFAULT_N_INIT,
        }
    }
}

/// A fitted k-means model. Centroids are stored row-major, `k x d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClusterModelFile", into = "ClusterModelFile")]
pub struct ClusterModel {
    pub k: usize,
    pub d: usize,
    pub centroids: Vec<f64>,
    pub seed: u64,
    pub inertia: f64,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.d..(i + 1) * self.d]
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, point: &[f64]) -> (usize, f64) {
        nearest_centroid(&self.centroids, self.d, point)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClusterError> {
        serde_json::from_str(text).map_err(|e| ClusterError::MalformedModel(e.to_string()))
    }
}

/// On-disk form: centroids as base64 of little-endian `f64`.
#[derive(Serialize, Deserialize)]
struct ClusterModelFile {
    k: usize,
    d: usize,
    seed: u64,
    inertia: f64,
    iterations: usize,
    centroids: String,
}

impl From<ClusterModel> for ClusterModelFile {
    fn from(m: ClusterModel) -> Self {
        let bytes: Vec<u8> = m.centroids.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            k: m.k,
            d: m.d,
            seed: m.seed,
            inertia: m.inertia,
            iterations: m.iterations,
            centroids: BASE64.encode(bytes),
        }
    }
}

impl TryFrom<ClusterModelFile> for ClusterModel {
    type Error = String;

    fn try_from(f: ClusterModelFile) -> Result<Self, Self::Error> {
        let bytes = BASE64.decode(&f.centroids).map_err(|e| e.to_string())?;
        if bytes.len() != 8 * f.k * f.d {
            return Err(format!(
                "centroid payload has {} bytes, expected {}",
                bytes.len(),
                8 * f.k * f.d
            ));
        }
        let centroids: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if f.k == 0 || centroids.iter().any(|v| !v.is_finite()) {
            return Err("centroids must be finite and k >= 1".into());
        }
        Ok(Self {
            k: f.k,
            d: f.d,
            centroids,
            seed: f.seed,
            inertia: f.inertia,
            iterations: f.iterations,
        })
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn nearest_centroid(centroids: &[f64], d: usize, point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(d).enumerate() {
        let dist = sq_dist(point, c);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

fn assign_all(data: &[f64], d: usize, centroids: &[f64]) -> Vec<(usize, f64)> {
    data.par_chunks(d)
        .map(|row| nearest_centroid(centroids, d, row))
        .collect()
}

fn kmeans_plus_plus<R: Rng>(data: &[f64], n: usize, d: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&data[first * d..(first + 1) * d]);
    let mut closest: Vec<f64> = data
        .par_chunks(d)
        .map(|row| sq_dist(row, &centroids[..d]))
        .collect();
    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in closest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just below `target`: take the last candidate.
            chosen.unwrap_or_else(|| closest.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(&data[pick * d..(pick + 1) * d]);
        let new_c = centroids[start..].to_vec();
        closest
            .par_iter_mut()
            .zip(data.par_chunks(d))
            .for_each(|(c, row)| *c = c.min(sq_dist(row, &new_c)));
    }
    centroids
}

/// Fits k-means on a row-major `n x d` matrix.
///
/// Restart 0 is seeded with `seed` itself and restart `r > 0` with a seed
/// derived from `(seed, r)`. Ties on inertia keep the earlier restart.
pub fn fit_matrix(
    data: &[f64],
    d: usize,
    k: usize,
    seed: u64,
    opts: KMeansOptions,
) -> Result<ClusterModel, ClusterError> {
    let n = data.len() / d;
    if k == 0 {
        return Err(ClusterError::InvalidK(k));
    }
    if n < k {
        return Err(ClusterError::TooFewPoints { n, k });
    }
    let mut best: Option<ClusterModel> = None;
    for restart in 0..opts.n_init.max(1) {
        let run_seed = if restart == 0 {
            seed
        } else {
            seeding::derive_seed(seed, &[restart as u64])
        };
        let model = fit_once(data, n, d, k, run_seed, opts);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    let mut model = best.expect("at least one restart");
    model.seed = seed;
    Ok(model)
}

fn fit_once(data: &[f64], n: usize, d: usize, k: usize, seed: u64, opts: KMeansOptions) -> ClusterModel {
    let mut rng = seeding::rng(seed);
    let mut centroids = kmeans_plus_plus(data, n, d, k, &mut rng);
    let mut iterations = 0;
    let mut prev_inertia = f64::INFINITY;

    while iterations < opts.max_iter {
        iterations += 1;
        let assignment = assign_all(data, d, &centroids);
        let inertia: f64 = assignment.iter().map(|a| a.1).sum();
        debug_assert!(
            inertia <= prev_inertia * (1.0 + 1e-9) + 1e-12,
            "k-means inertia increased: {prev_inertia} -> {inertia}"
        );
        prev_inertia = inertia;

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (row, &(j, _)) in data.chunks_exact(d).zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j * d..(j + 1) * d].iter_mut().zip(row) {
                *s += v;
            }
        }

        // Empty clusters take the points farthest from their current centroid.
        let mut far: Vec<usize> = Vec::new();
        if counts.contains(&0) {
            far = (0..n).collect();
            far.sort_by(|&a, &b| assignment[b].1.total_cmp(&assignment[a].1).then(a.cmp(&b)));
        }
        let mut far_iter = far.into_iter();

        let mut shift = 0.0f64;
        let mut next = vec![0.0; k * d];
        for j in 0..k {
            let target = &mut next[j * d..(j + 1) * d];
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (t, s) in target.iter_mut().zip(&sums[j * d..(j + 1) * d]) {
                    *t = s * inv;
                }
            } else {
                let p = far_iter.next().expect("n >= k guarantees a donor point");
                target.copy_from_slice(&data[p * d..(p + 1) * d]);
            }
            shift = shift.max(sq_dist(target, &centroids[j * d..(j + 1) * d]).sqrt());
        }
        centroids = next;
        if shift < opts.tol {
            break;
        }
    }

    let inertia = assign_all(data, d, &centroids).iter().map(|a| a.1).sum();
    ClusterModel {
        k,
        d,
        centroids,
        seed,
        inertia,
        iterations,
    }
}

/// Fits k-means with the default options (k-means++, 10 restarts, tol 1e-6, 300 iterations).
pub fn kmeans_fit(fs: &FeatureSet, k: usize, seed: u64) -> Result<ClusterModel, ClusterError> {
    fit_matrix(&fs.to_f64(), fs.d(), k, seed, KMeansOptions::default())
}

/// Nearest-centroid index for every row of `fs`.
pub fn assign(model: &ClusterModel, fs: &FeatureSet) -> Result<Vec<usize>, ClusterError> {
    if fs.d() != model.d {
        return Err(ClusterError::DimensionMismatch {
            model: model.d,
            data: fs.d(),
        });
    }
    Ok(assign_matrix(model, &fs.to_f64()))
}

pub(crate) fn assign_matrix(model: &ClusterModel, data: &[f64]) -> Vec<usize> {
    assign_all(data, model.d, &model.centroids)
        .into_iter()
        .map(|(j, _)| j)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_two_clusters() {
        let fs = FeatureSet::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let m = kmeans_fit(&fs, 2, 11).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut cs: Vec<Vec<f64>> = (0..2).map(|i| m.centroid(i).to_vec()).collect();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, vec![vec![0.0, 0.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn single_cluster_is_column_mean() {
        let fs = FeatureSet::from_rows(&[[1.0, 2.0], [3.0, 6.0], [5.0, 1.0]]).unwrap();
        let m = kmeans_fit(&fs, 1, 0).unwrap();
        assert!((m.centroid(0)[0] - 3.0).abs() < 1e-12);
        assert!((m.centroid(0)[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let fs = FeatureSet::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(matches!(
            kmeans_fit(&fs, 3, 0),
            Err(ClusterError::TooFewPoints { n: 2, k: 3 })
        ));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let fs = FeatureSet::from_rows(&[[1.0], [1.0], [1.0], [1.0]]).unwrap();
        let m = kmeans_fit(&fs, 3, 5).unwrap();
        assert_eq!(m.k, 3);
        assert_eq!(m.inertia, 0.0);
    }

    fn model(centroids: &[[f64; 2]]) -> ClusterModel {
        ClusterModel {
            k: centroids.len(),
            d: 2,
            centroids: centroids.iter().flatten().copied().collect(),
            seed: 0,
            inertia: 0.0,
            iterations: 0,
        }
    }

    #[test]
    fn assignment_and_ties() {
        let m = model(&[[10.0, 10.0], [-1.0, 0.0], [1.0, 0.0], [5.0, 5.0]]);
        let fs = FeatureSet::from_rows(&[[5.0, 5.0], [0.0, 0.0]]).unwrap();
        assert_eq!(assign(&m, &fs).unwrap(), vec![3, 1]);
        let wrong = FeatureSet::from_rows(&[[0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(assign(&m, &wrong), Err(ClusterError::DimensionMismatch { .. })));
    }

    #[test]
    fn json_round_trip() {
        let m = model(&[[0.1, -2.5], [1e-300, 7.0]]);
        assert_eq!(ClusterModel::from_json(&m.to_json()).unwrap(), m);
        assert!(ClusterModel::from_json("{\"k\":1}").is_err());
    }
}

//! SD validity index (average scattering plus total centroid separation) and
//! the k sweep that picks the cluster count minimizing it.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{assign_matrix, fit_matrix, ClusterModel, KMeansOptions};
use super::ClusterError;
use crate::data::FeatureSet;

pub const DEFAULT_K_MIN: usize = 2;
pub const DEFAULT_K_MAX: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdComponents {
    pub scat: f64,
    pub dis: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdRow {
    pub k: usize,
    pub scat: f64,
    pub dis: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdIndexReport {
    pub per_k: Vec<SdRow>,
    pub alpha: f64,
    pub chosen_k: usize,
}

impl SdIndexReport {
    /// CSV with header `k,scat,dis,sd`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,scat,dis,sd\n");
        for r in &self.per_k {
            writeln!(out, "{},{},{},{}", r.k, r.scat, r.dis, r.sd).unwrap();
        }
        out
    }
}

fn column_variance<'a>(rows: impl Iterator<Item = &'a [f64]>, d: usize) -> Vec<f64> {
    let rows: Vec<&[f64]> = rows.collect();
    let mut var = vec![0.0; d];
    if rows.is_empty() {
        return var;
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(*r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for r in &rows {
        for ((acc, v), m) in var.iter_mut().zip(*r).zip(&mean) {
            *acc += (v - m).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    var
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Average scattering: mean over clusters of `||var(cluster)|| / ||var(X)||`.
pub(crate) fn scattering(data: &[f64], d: usize, labels: &[usize], k: usize) -> Result<f64, ClusterError> {
    let total = norm(&column_variance(data.chunks_exact(d), d));
    if total == 0.0 {
        return Err(ClusterError::DegenerateData);
    }
    let mut sum = 0.0;
    for j in 0..k {
        let members = data
            .chunks_exact(d)
            .zip(labels)
            .filter(|(_, &l)| l == j)
            .map(|(r, _)| r);
        sum += norm(&column_variance(members, d)) / total;
    }
    Ok(sum / k as f64)
}

/// Total separation: `(D_max / D_min) * sum_i (sum_j ||c_i - c_j||)^-1`.
pub(crate) fn separation(centroids: &[f64], d: usize) -> Result<f64, ClusterError> {
    let k = centroids.len() / d;
    let (mut d_max, mut d_min) = (0.0f64, f64::INFINITY);
    let mut row_sums = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let dist = norm(
                &centroids[i * d..(i + 1) * d]
                    .iter()
                    .zip(&centroids[j * d..(j + 1) * d])
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            d_max = d_max.max(dist);
            d_min = d_min.min(dist);
            row_sums[i] += dist;
        }
    }
    if d_min == 0.0 {
        return Err(ClusterError::CoincidentCentroids);
    }
    Ok(d_max / d_min * row_sums.iter().map(|s| 1.0 / s).sum::<f64>())
}

fn check_fitted(model: &ClusterModel, fs: &FeatureSet) -> Result<(), ClusterError> {
    if model.k < 2 {
        return Err(ClusterError::InvalidK(model.k));
    }
    if fs.d() != model.d {
        return Err(ClusterError::DimensionMismatch {
            model: model.d,
            data: fs.d(),
        });
    }
    Ok(())
}

/// SD index of a fitted model: `sd = alpha * scat + dis`.
pub fn sd_index(fs: &FeatureSet, model: &ClusterModel, alpha: f64) -> Result<SdComponents, ClusterError> {
    check_fitted(model, fs)?;
    let data = fs.to_f64();
    let labels = assign_matrix(model, &data);
    let scat = scattering(&data, model.d, &labels, model.k)?;
    let dis = separation(&model.centroids, model.d)?;
    Ok(SdComponents {
        scat,
        dis,
        sd: alpha * scat + dis,
    })
}

/// Fits one model per k in `[k_min, k_max]` and keeps the SD-index minimizer.
///
/// The weighting constant is the separation at `k_max`. Ties on `sd` go to the
/// smaller k. Every k uses the same seed, so the sweep is reproducible.
pub fn select_k(
    fs: &FeatureSet,
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<(ClusterModel, SdIndexReport), ClusterError> {
    if k_min < 2 || k_min > k_max || k_max > fs.n() {
        return Err(ClusterError::InvalidSweep {
            k_min,
            k_max,
            n: fs.n(),
        });
    }
    let data = fs.to_f64();
    let d = fs.d();
    let fits: Vec<(ClusterModel, f64, f64)> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let model = fit_matrix(&data, d, k, seed, KMeansOptions::default())?;
            let labels = assign_matrix(&model, &data);
            let scat = scattering(&data, d, &labels, k)?;
            let dis = separation(&model.centroids, d)?;
            Ok((model, scat, dis))
        })
        .collect::<Result<_, ClusterError>>()?;

    let alpha = fits.last().expect("non-empty sweep").2;
    let per_k: Vec<SdRow> = fits
        .iter()
        .map(|(m, scat, dis)| SdRow {
            k: m.k,
            scat: *scat,
            dis: *dis,
            sd: alpha * scat + dis,
        })
        .collect();
    let best = per_k
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.sd < per_k[best].sd { i } else { best });
    let chosen_k = per_k[best].k;
    let model = fits.into_iter().nth(best).unwrap().0;
    Ok((
        model,
        SdIndexReport {
            per_k,
            alpha,
            chosen_k,
        },
    ))
}

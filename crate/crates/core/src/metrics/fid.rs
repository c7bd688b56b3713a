//! Fréchet distance between Gaussians fitted to two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data::FeatureSet;

/// Mean vector and sample covariance (divisor `n - 1`) of a feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomentsFile", into = "MomentsFile")]
pub struct GaussianMoments {
    pub n: usize,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct MomentsFile {
    n: usize,
    d: usize,
    mu: Vec<f64>,
    /// Row-major `d x d`.
    sigma: Vec<f64>,
}

impl From<GaussianMoments> for MomentsFile {
    fn from(m: GaussianMoments) -> Self {
        let d = m.mu.len();
        Self {
            n: m.n,
            d,
            mu: m.mu.iter().copied().collect(),
            sigma: m.sigma.transpose().iter().copied().collect(),
        }
    }
}

impl TryFrom<MomentsFile> for GaussianMoments {
    type Error = String;

    fn try_from(f: MomentsFile) -> Result<Self, Self::Error> {
        if f.mu.len() != f.d || f.sigma.len() != f.d * f.d {
            return Err(format!(
                "moments for d={} need {} means and {} covariance entries",
                f.d,
                f.d,
                f.d * f.d
            ));
        }
        if f.mu.iter().chain(&f.sigma).any(|v| !v.is_finite()) {
            return Err("moments must be finite".into());
        }
        Ok(Self {
            n: f.n,
            mu: DVector::from_vec(f.mu),
            sigma: DMatrix::from_row_slice(f.d, f.d, &f.sigma),
        })
    }
}

impl GaussianMoments {
    pub fn d(&self) -> usize {
        self.mu.len()
    }
}

pub fn gaussian_moments(fs: &FeatureSet) -> Result<GaussianMoments, MetricsError> {
    let (n, d) = (fs.n(), fs.d());
    if n < 2 {
        return Err(MetricsError::TooFewPoints { n, required: 2 });
    }
    let mut x = DMatrix::from_row_slice(n, d, &fs.to_f64());
    let mu = DVector::from_iterator(d, x.column_iter().map(|c| c.sum() / n as f64));
    for (mut col, m) in x.column_iter_mut().zip(mu.iter()) {
        col.add_scalar_mut(-m);
    }
    let s = x.tr_mul(&x) / (n as f64 - 1.0);
    let sigma = (&s + s.transpose()) * 0.5;
    Ok(GaussianMoments { n, mu, sigma })
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in i + 1..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<(), MetricsError> {
    if !a.is_square() {
        return Err(MetricsError::NotSymmetric(f64::INFINITY));
    }
    // Tolerance scales with the largest entry so covariance units do not matter.
    let scale = a.amax().max(1.0);
    let worst = asymmetry(a);
    if worst > 1e-6 * scale {
        return Err(MetricsError::NotSymmetric(worst));
    }
    Ok(())
}

fn clamped_eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (a + a.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    eig.eigenvalues.apply(|l| *l = l.max(0.0));
    eig
}

/// Principal square root of a symmetric positive semi-definite matrix.
/// Negative eigenvalues (round-off) are clamped to zero.
pub fn matrix_sqrt_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    check_symmetric(a)?;
    let eig = clamped_eigen(a);
    let root = eig.eigenvalues.map(f64::sqrt);
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&root);
    Ok(scaled * eig.eigenvectors.transpose())
}

/// `Tr(sqrt(A B))` for PSD `A`, `B`, evaluated through the symmetric product
/// `sqrt(A) B sqrt(A)`, which has the same spectrum as `A B`.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, MetricsError> {
    let a_half = matrix_sqrt_psd(a)?;
    let inner = &a_half * b * &a_half;
    check_symmetric(&inner)?;
    Ok(clamped_eigen(&inner).eigenvalues.iter().map(|l| l.sqrt()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: f64,
    pub n_real: usize,
    pub n_synth: usize,
    pub d: usize,
}

/// Fréchet distance `||mu_r - mu_s||^2 + Tr(S_r + S_s - 2 sqrt(S_r S_s))`.
///
/// Results in `[-1e-6, 0)` are round-off and reported as 0.
pub fn fid_from_moments(real: &GaussianMoments, synth: &GaussianMoments) -> Result<MetricReport, MetricsError> {
    let d = real.d();
    if synth.d() != d || real.sigma.shape() != (d, d) || synth.sigma.shape() != (d, d) {
        return Err(MetricsError::DimensionMismatch {
            real: d,
            synth: synth.d(),
        });
    }
    let mean_term = (&real.mu - &synth.mu).norm_squared();
    let cross = trace_sqrt_product(&real.sigma, &synth.sigma)?;
    let fid = mean_term + real.sigma.trace() + synth.sigma.trace() - 2.0 * cross;
    if fid < -1e-6 || !fid.is_finite() {
        return Err(MetricsError::NumericalFailure(fid));
    }
    Ok(MetricReport {
        fid: fid.max(0.0),
        n_real: real.n,
        n_synth: synth.n,
        d,
    })
}

pub fn compute_fid(real: &FeatureSet, synth: &FeatureSet) -> Result<MetricReport, MetricsError> {
    if real.d() != synth.d() {
        return Err(MetricsError::DimensionMismatch {
            real: real.d(),
            synth: synth.d(),
        });
    }
    fid_from_moments(&gaussian_moments(real)?, &gaussian_moments(synth)?)
}

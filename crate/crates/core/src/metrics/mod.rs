//! Generative-model evaluation over feature sets: FID and improved
//! precision/recall.

mod fid;
mod precision_recall;

use thiserror::Error;

pub use fid::{compute_fid, fid_from_moments, gaussian_moments, matrix_sqrt_psd, GaussianMoments, MetricReport};
pub use precision_recall::{compute_improved_pr, count_inside, knn_radii, PRReport, DEFAULT_K};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{n} points, at least {required} required")]
    TooFewPoints { n: usize, required: usize },
    #[error("real features have dimension {real}, synthetic have {synth}")]
    DimensionMismatch { real: usize, synth: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("neighbourhood size must be at least 1, got {0}")]
    InvalidNeighborhood(usize),
    #[error("Fréchet distance evaluated to {0}, numerical failure")]
    NumericalFailure(f64),
}

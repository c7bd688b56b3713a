//! Patch curation: drops background, scanner-dark, flat, blurry and cell-poor
//! patches using HSV statistics, Laplacian variance and a count of enclosed
//! dark shapes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::data::{DatasetManifest, ManifestRecord};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("unsupported image: {0}")]
    UnsupportedImage(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    pub mean_s: f64,
    pub mean_v: f64,
    pub std_h: f64,
    pub std_s: f64,
    pub std_v: f64,
    pub lap_var: f64,
    pub shape_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationThresholds {
    pub max_mean_v_background: f64,
    pub max_mean_s_background: f64,
    pub min_mean_v_dark: f64,
    pub min_std_hsv: f64,
    pub min_lap_var: f64,
    pub min_shape_count: usize,
    pub shape_area_min_px: usize,
    pub shape_area_max_px: usize,
}

impl Default for CurationThresholds {
    fn default() -> Self {
        Self {
            max_mean_v_background: 0.94,
            max_mean_s_background: 0.10,
            min_mean_v_dark: 0.10,
            min_std_hsv: 0.02,
            min_lap_var: 0.002,
            min_shape_count: 5,
            shape_area_min_px: 10,
            shape_area_max_px: 2000,
        }
    }
}

impl CurationThresholds {
    pub fn validate(&self) -> Result<(), CurationError> {
        let reals = [
            ("max_mean_v_background", self.max_mean_v_background),
            ("max_mean_s_background", self.max_mean_s_background),
            ("min_mean_v_dark", self.min_mean_v_dark),
            ("min_std_hsv", self.min_std_hsv),
            ("min_lap_var", self.min_lap_var),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CurationError::InvalidThresholds(format!("{name} = {v}")));
            }
        }
        if self.shape_area_min_px >= self.shape_area_max_px {
            return Err(CurationError::InvalidThresholds(format!(
                "shape area bounds [{}, {}] are empty",
                self.shape_area_min_px, self.shape_area_max_px
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Background,
    TooDark,
    LowVariation,
    Blurry,
    TooFewShapes,
    DecodeError,
}

/// Standard hexcone RGB to HSV with all three channels in `[0, 1]`.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (r, g, b) = (f64::from(r) / 255.0, f64::from(g) / 255.0, f64::from(b) / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h, s, v)
}

fn luma(p: &image::Rgb<u8>) -> f64 {
    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

/// Variance over all pixels of the 4-neighbour Laplacian of `gray`.
///
/// The response is evaluated on interior pixels and is zero on the one-pixel
/// border, so constant images give exactly zero.
pub fn laplacian_variance(gray: &[f64], width: usize, height: usize) -> f64 {
    let mut response = vec![0.0; width * height];
    if width >= 3 && height >= 3 {
        for y in 1..height - 1 {
            for x in 1..width - 1 {
                let i = y * width + x;
                response[i] =
                    gray[i - 1] + gray[i + 1] + gray[i - width] + gray[i + width] - 4.0 * gray[i];
            }
        }
    }
    mean_std(&response).1.powi(2)
}

/// Otsu threshold over an 8-bit histogram: the level `t` maximizing the
/// between-class variance of `{<= t}` vs `{> t}`. `None` for single-level images.
pub fn otsu_level(pixels: &[u8]) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &p in pixels {
        hist[p as usize] += 1;
    }
    let total = pixels.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut weight_low = 0.0;
    let mut sum_low = 0.0;
    let mut best: Option<(u8, f64)> = None;
    for t in 0..255usize {
        weight_low += hist[t] as f64;
        sum_low += t as f64 * hist[t] as f64;
        let weight_high = total - weight_low;
        if weight_low == 0.0 || weight_high == 0.0 {
            continue;
        }
        let mean_low = sum_low / weight_low;
        let mean_high = (sum_all - sum_low) / weight_high;
        let between = weight_low * weight_high * (mean_low - mean_high).powi(2);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t as u8, between));
        }
    }
    best.map(|(t, _)| t)
}

/// Sizes of the 8-connected components of `mask`.
pub fn component_areas(mask: &[bool], width: usize, height: usize) -> Vec<usize> {
    let mut visited = vec![false; mask.len()];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let mut area = 0;
        while let Some(i) = stack.pop() {
            area += 1;
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && !visited[j] {
                        visited[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        areas.push(area);
    }
    areas
}

pub fn compute_patch_stats(
    image: &RgbImage,
    thresholds: &CurationThresholds,
) -> Result<PatchStats, CurationError> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return Err(CurationError::UnsupportedImage("image has zero pixels".into()));
    }
    let count = w * h;
    let mut hs = Vec::with_capacity(count);
    let mut ss = Vec::with_capacity(count);
    let mut vs = Vec::with_capacity(count);
    let mut gray = Vec::with_capacity(count);
    for p in image.pixels() {
        let (hh, s, v) = rgb_to_hsv(p[0], p[1], p[2]);
        hs.push(hh);
        ss.push(s);
        vs.push(v);
        gray.push(luma(p));
    }
    let (_, std_h) = mean_std(&hs);
    let (mean_s, std_s) = mean_std(&ss);
    let (mean_v, std_v) = mean_std(&vs);

    let unit_gray: Vec<f64> = gray.iter().map(|g| g / 255.0).collect();
    let lap_var = laplacian_variance(&unit_gray, w, h);

    let inverted: Vec<u8> = gray.iter().map(|&g| 255 - g.round().clamp(0.0, 255.0) as u8).collect();
    let shape_count = match otsu_level(&inverted) {
        Some(level) => {
            let mask: Vec<bool> = inverted.iter().map(|&p| p > level).collect();
            component_areas(&mask, w, h)
                .into_iter()
                .filter(|a| (thresholds.shape_area_min_px..=thresholds.shape_area_max_px).contains(a))
                .count()
        }
        None => 0,
    };

    Ok(PatchStats {
        mean_s,
        mean_v,
        std_h,
        std_s,
        std_v,
        lap_var,
        shape_count,
    })
}

/// First failing check, in fixed order, or `None` when the patch is kept.
pub fn first_failure(stats: &PatchStats, t: &CurationThresholds) -> Option<RejectReason> {
    if stats.mean_v > t.max_mean_v_background && stats.mean_s < t.max_mean_s_background {
        Some(RejectReason::Background)
    } else if stats.mean_v < t.min_mean_v_dark {
        Some(RejectReason::TooDark)
    } else if stats.std_h < t.min_std_hsv || stats.std_s < t.min_std_hsv || stats.std_v < t.min_std_hsv {
        Some(RejectReason::LowVariation)
    } else if stats.lap_var < t.min_lap_var {
        Some(RejectReason::Blurry)
    } else if stats.shape_count < t.min_shape_count {
        Some(RejectReason::TooFewShapes)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchOutcome {
    pub path: String,
    pub stats: Option<PatchStats>,
    pub accepted: bool,
    pub reason: Option<RejectReason>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub patches: Vec<PatchOutcome>,
}

impl CurationReport {
    pub fn accepted_count(&self) -> usize {
        self.patches.iter().filter(|p| p.accepted).count()
    }

    pub fn rejected_count(&self) -> usize {
        self.patches.len() - self.accepted_count()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CurationError> {
        let io_err = |source| CurationError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for p in &self.patches {
            let line = serde_json::to_string(p).expect("patch outcome serializes");
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

fn evaluate(path: &Path, t: &CurationThresholds) -> (Option<PatchStats>, Option<RejectReason>) {
    let img = match image::open(path) {
        Ok(img) => img.to_rgb8(),
        Err(_) => return (None, Some(RejectReason::DecodeError)),
    };
    match compute_patch_stats(&img, t) {
        Ok(stats) => (Some(stats), first_failure(&stats, t)),
        Err(_) => (None, Some(RejectReason::DecodeError)),
    }
}

/// Scans `input_dir` recursively for PNG/JPEG patches and applies the checks.
///
/// A file under `input_dir/<label>/...` takes `<label>` as its class label;
/// files directly in `input_dir` are labeled `unlabeled`. Record ids are the
/// path relative to `input_dir` with `/` separators. Results are sorted by path.
pub fn curate(
    input_dir: &Path,
    thresholds: &CurationThresholds,
) -> Result<(DatasetManifest, CurationReport), CurationError> {
    thresholds.validate()?;
    let mut paths = Vec::new();
    for entry in WalkDir::new(input_dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CurationError::Io {
            path: e.path().unwrap_or(input_dir).to_path_buf(),
            source: e.into_io_error().unwrap_or_else(|| io::Error::other("directory loop")),
        })?;
        if entry.file_type().is_file() && is_image_file(entry.path()) {
            paths.push(entry.into_path());
        }
    }
    paths.sort();

    let outcomes: Vec<_> = paths
        .par_iter()
        .map(|p| evaluate(p, thresholds))
        .collect();

    let mut records = Vec::new();
    let mut patches = Vec::with_capacity(paths.len());
    for (path, (stats, reason)) in paths.iter().zip(outcomes) {
        let rel = path.strip_prefix(input_dir).unwrap_or(path);
        let id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if reason.is_none() {
            let label = if rel.components().count() > 1 {
                rel.components()
                    .next()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .unwrap_or_default()
            } else {
                "unlabeled".to_string()
            };
            let mut record = ManifestRecord::new(id.clone(), label);
            record.source_path = Some(path.to_string_lossy().into_owned());
            records.push(record);
        }
        patches.push(PatchOutcome {
            path: id,
            stats,
            accepted: reason.is_none(),
            reason,
        });
    }
    let manifest = DatasetManifest::new(records).with_step(format!(
        "curate {}: {} of {} patches kept",
        input_dir.display(),
        patches.iter().filter(|p| p.accepted).count(),
        patches.len()
    ));
    Ok((manifest, CurationReport { patches }))
}

//! On-disk fixtures for pipeline tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use histoprompt_core::data::{save_embeddings, FeatureSet};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const LABELS: [&str; 2] = ["cancer", "healthy"];

fn jitter(x: u32, y: u32, c: u32, salt: u32) -> i32 {
    let h = (x.wrapping_mul(73_856_093) ^ y.wrapping_mul(19_349_663) ^ c.wrapping_mul(83_492_791) ^ salt) % 21;
    h as i32 - 10
}

/// Pink textured background with dark purple 6x6 squares, enough to pass curation.
pub fn tissue(blobs: usize, salt: u32) -> RgbImage {
    let mut img = RgbImage::from_fn(96, 96, |x, y| {
        let base = [235, 190, 210];
        Rgb(std::array::from_fn(|c| (base[c] + jitter(x, y, c as u32, salt)).clamp(0, 255) as u8))
    });
    for b in 0..blobs {
        let (ox, oy) = (8 + 20 * (b % 4) as u32, 10 + 24 * (b / 4) as u32);
        for y in oy..oy + 6 {
            for x in ox..ox + 6 {
                img.put_pixel(x, y, Rgb([100, 40, 140]));
            }
        }
    }
    img
}

/// `per_label` tissue patches under `dir/<label>/`, plus one blank patch
/// that curation must drop. Returns the ids of the kept patches.
pub fn patch_tree(dir: &Path, per_label: usize) -> Vec<(String, String)> {
    let mut ids = Vec::new();
    for label in LABELS {
        let sub = dir.join(label);
        fs::create_dir_all(&sub).unwrap();
        for i in 0..per_label {
            let name = format!("p{i:03}.png");
            tissue(6 + i % 3, i as u32 * 7 + label.len() as u32).save(sub.join(&name)).unwrap();
            ids.push((format!("{label}/{name}"), label.to_string()));
        }
    }
    RgbImage::from_pixel(96, 96, Rgb([250, 250, 250])).save(dir.join("cancer/zz_blank.png")).unwrap();
    ids
}

/// Embeddings for `ids` drawn around three well-separated centres.
pub fn embeddings(path: &Path, ids: &[(String, String)], d: usize, shift: f64, seed: u64) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let mut values = Vec::with_capacity(ids.len() * d);
    for i in 0..ids.len() {
        let centre = i % 3;
        for j in 0..d {
            let c = if j == centre { 10.0 } else { 0.0 };
            values.push((c + shift + noise.sample(&mut rng)) as f32);
        }
    }
    let fs = FeatureSet::new(
        d,
        values,
        ids.iter().map(|(id, _)| id.clone()).collect(),
        ids.iter().map(|(_, l)| l.clone()).collect(),
    )
    .unwrap();
    save_embeddings(&fs, path).unwrap();
    fs
}

/// Random Gaussian feature file with generated ids.
pub fn gaussian_embeddings(path: &Path, n: usize, d: usize, mean: f64, seed: u64) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<(String, String)> = (0..n).map(|i| (format!("row-{i}"), LABELS[i % 2].to_string())).collect();
    let values = (0..n * d).map(|_| (mean + rng.random::<f64>()) as f32).collect();
    let fs = FeatureSet::new(
        d,
        values,
        ids.iter().map(|(id, _)| id.clone()).collect(),
        ids.iter().map(|(_, l)| l.clone()).collect(),
    )
    .unwrap();
    save_embeddings(&fs, path).unwrap();
    fs
}

/// Writes `n` small images into `dir`.
pub fn image_dir(dir: &Path, n: usize, salt: u32) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        tissue(5 + i % 4, salt + i as u32).save(dir.join(format!("img{i:03}.png"))).unwrap();
    }
    dir.to_path_buf()
}

//! Display copies of study images at 512x512.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{DynamicImage, ImageFormat};

use crate::definition::StudyDefinition;
use crate::service::StudyError;

pub const DISPLAY_SIZE: u32 = 512;

fn decode(path: &Path) -> Result<DynamicImage, StudyError> {
    image::open(path).map_err(|e| StudyError::io(path, std::io::Error::other(e)))
}

fn upscale(img: DynamicImage) -> DynamicImage {
    if img.width() == DISPLAY_SIZE && img.height() == DISPLAY_SIZE {
        img
    } else {
        img.resize_exact(DISPLAY_SIZE, DISPLAY_SIZE, FilterType::Lanczos3)
    }
}

/// PNG bytes of the image resized to the display size.
pub fn render_for_display(path: &Path) -> Result<Vec<u8>, StudyError> {
    let img = upscale(decode(path)?);
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| StudyError::io(path, std::io::Error::other(e)))?;
    Ok(buf.into_inner())
}

/// Writes `<item_id>.png` display copies into `out_dir` and returns the
/// definition rewritten to point at them. File names carry no truth.
pub fn prepare_images(def: &StudyDefinition, out_dir: &Path) -> Result<StudyDefinition, StudyError> {
    std::fs::create_dir_all(out_dir).map_err(|e| StudyError::io(out_dir, e))?;
    let mut out = def.clone();
    for item in &mut out.items {
        let target: PathBuf = out_dir.join(format!("{}.png", item.item_id));
        upscale(decode(&item.image_path)?)
            .save_with_format(&target, ImageFormat::Png)
            .map_err(|e| StudyError::io(&target, std::io::Error::other(e)))?;
        item.image_path = target;
    }
    Ok(out)
}

use std::path::Path;

use image::{Rgb, RgbImage};
use kpcacam::{Heatmap, ImageTensor};

use crate::CliError;

const ALPHA: f64 = 0.5;

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Grayscale heatmap alpha-blended over the image rendered to 8 bits using
/// its value range. Gray images are replicated to RGB.
pub fn overlay(image: &ImageTensor, cam: &Heatmap) -> RgbImage {
    let (lo, hi) = image.value_range();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let v = image.view();
    let c = image.channels();
    let cam = cam.view();
    RgbImage::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let heat = cam[[y, x]];
        Rgb(std::array::from_fn(|k| {
            let pixel = (v[[k.min(c - 1), y, x]] - lo) / span;
            to_u8((1.0 - ALPHA) * pixel.clamp(0.0, 1.0) + ALPHA * heat)
        }))
    })
}

pub fn save_overlay(image: &ImageTensor, cam: &Heatmap, path: &Path) -> Result<(), CliError> {
    overlay(image, cam)
        .save(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

use rayon::prelude::*;

use super::{Patch, SsimConfig};
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Single-channel raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        // same invariants as a patch
        let p = Patch::new(width, height, pixels)?;
        Ok(Self { width: p.width, height: p.height, pixels: p.pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Source coordinate in pixel-index space for output sample `u` of `dim`
/// across the continuous span `[lo, hi)`, clamped to the valid range.
fn source_coord(lo: f64, hi: f64, u: usize, dim: usize, limit: usize) -> (usize, usize, f64) {
    let s = lo + (u as f64 + 0.5) * ((hi - lo) / dim as f64) - 0.5;
    let s = s.clamp(0.0, (limit - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(limit - 1);
    (i0, i1, s - i0 as f64)
}

/// Crops `bbox` (clipped to the image) and bilinearly resamples it to a
/// `resize_dim x resize_dim` patch. Pixel centres sit at half-integer
/// coordinates, so a full-image box on an image of the target size is
/// reproduced exactly.
pub fn extract_patch(image: &GrayImage, bbox: &BBox, cfg: &SsimConfig) -> Result<Patch> {
    let (w, h) = (image.width as f64, image.height as f64);
    let x1 = bbox.x1().max(0.0);
    let y1 = bbox.y1().max(0.0);
    let x2 = bbox.x2().min(w);
    let y2 = bbox.y2().min(h);
    if image.width == 0 || image.height == 0 || x1 >= x2 || y1 >= y2 {
        return Err(Error::BoxOutsideImage { index: None, bbox: *bbox });
    }

    let dim = cfg.resize_dim;
    let cols: Vec<_> = (0..dim).map(|u| source_coord(x1, x2, u, dim, image.width)).collect();
    let mut pixels = Vec::with_capacity(dim * dim);
    for v in 0..dim {
        let (r0, r1, ty) = source_coord(y1, y2, v, dim, image.height);
        for &(c0, c1, tx) in &cols {
            let (a, b) = (image.get(c0, r0), image.get(c1, r0));
            let (c, d) = (image.get(c0, r1), image.get(c1, r1));
            let top = a + tx * (b - a);
            let bottom = c + tx * (d - c);
            pixels.push((top + ty * (bottom - top)).clamp(0.0, 1.0));
        }
    }
    Patch::new(dim, dim, pixels)
}

/// Extracts every crop in parallel; errors name the offending box index.
pub fn extract_patches(image: &GrayImage, boxes: &[BBox], cfg: &SsimConfig) -> Result<Vec<Patch>> {
    boxes
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            extract_patch(image, b, cfg).map_err(|e| match e {
                Error::BoxOutsideImage { bbox, .. } => Error::BoxOutsideImage { index: Some(i), bbox },
                other => other,
            })
        })
        .collect()
}

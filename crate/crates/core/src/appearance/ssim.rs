//! Gaussian-windowed SSIM between two equally sized patches.
//!
//! Windows are evaluated in valid mode (fully inside the patch). Local moments
//! come from a separable Gaussian filter; the per-patch moments are cached in
//! [`PatchStats`] so that an all-pairs computation only filters the cross
//! product once per pair.

use super::{Patch, SsimConfig};
use crate::error::{Error, Result};

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
#[derive(Debug, Clone)]
pub(crate) struct GaussianWindow {
    taps: Vec<f64>,
}

impl GaussianWindow {
    pub(crate) fn new(size: usize, sigma: f64) -> Self {
        let center = (size / 2) as f64;
        let raw: Vec<f64> = (0..size)
            .map(|k| {
                let d = k as f64 - center;
                (-(d * d) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        Self { taps: raw.into_iter().map(|g| g / sum).collect() }
    }

    #[cfg(test)]
    pub(crate) fn taps(&self) -> &[f64] {
        &self.taps
    }

    fn size(&self) -> usize {
        self.taps.len()
    }

    /// Valid-mode separable filter of a `width x height` buffer.
    fn filter(&self, src: &[f64], width: usize, height: usize, tmp: &mut Vec<f64>, out: &mut Vec<f64>) {
        let k = self.size();
        let ow = width + 1 - k;
        let oh = height + 1 - k;
        tmp.clear();
        for r in 0..height {
            let row = &src[r * width..(r + 1) * width];
            for c in 0..ow {
                let mut acc = 0.0;
                for (t, &g) in self.taps.iter().enumerate() {
                    acc += g * row[c + t];
                }
                tmp.push(acc);
            }
        }
        out.clear();
        out.resize(ow * oh, 0.0);
        for r in 0..oh {
            for (t, &g) in self.taps.iter().enumerate() {
                let src_row = &tmp[(r + t) * ow..(r + t + 1) * ow];
                let dst = &mut out[r * ow..(r + 1) * ow];
                for (d, &s) in dst.iter_mut().zip(src_row) {
                    *d += g * s;
                }
            }
        }
    }
}

/// Windowed first and second moments of a single patch.
#[derive(Debug, Clone)]
pub(crate) struct PatchStats {
    mean: Vec<f64>,
    mean_sq: Vec<f64>,
}

/// Reusable buffers for one worker.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    product: Vec<f64>,
    tmp: Vec<f64>,
    cross: Vec<f64>,
}

/// Precomputed window and constants shared across many pair evaluations.
#[derive(Debug, Clone)]
pub(crate) struct SsimKernel {
    window: GaussianWindow,
    c1: f64,
    c2: f64,
    c3: f64,
}

impl SsimKernel {
    pub(crate) fn new(cfg: &SsimConfig) -> Self {
        Self {
            window: GaussianWindow::new(cfg.window_size, cfg.window_sigma),
            c1: cfg.c1,
            c2: cfg.c2,
            c3: cfg.c3,
        }
    }

    pub(crate) fn check(&self, patch: &Patch) -> Result<()> {
        let k = self.window.size();
        if patch.width() < k || patch.height() < k {
            return Err(Error::PatchTooSmall { width: patch.width(), height: patch.height(), window: k });
        }
        Ok(())
    }

    pub(crate) fn stats(&self, patch: &Patch, scratch: &mut Scratch) -> PatchStats {
        let (w, h) = (patch.width(), patch.height());
        let mut mean = Vec::new();
        self.window.filter(patch.pixels(), w, h, &mut scratch.tmp, &mut mean);
        scratch.product.clear();
        scratch.product.extend(patch.pixels().iter().map(|&v| v * v));
        let mut mean_sq = Vec::new();
        self.window.filter(&scratch.product, w, h, &mut scratch.tmp, &mut mean_sq);
        PatchStats { mean, mean_sq }
    }

    /// Mean over windows of luminance x contrast x structure. Both patches
    /// must already have been checked to share a shape.
    pub(crate) fn pair(
        &self,
        x: &Patch,
        sx: &PatchStats,
        y: &Patch,
        sy: &PatchStats,
        scratch: &mut Scratch,
    ) -> f64 {
        scratch.product.clear();
        scratch
            .product
            .extend(x.pixels().iter().zip(y.pixels()).map(|(&a, &b)| a * b));
        self.window
            .filter(&scratch.product, x.width(), x.height(), &mut scratch.tmp, &mut scratch.cross);

        let windows = scratch.cross.len();
        let mut total = 0.0;
        for k in 0..windows {
            let (mx, my) = (sx.mean[k], sy.mean[k]);
            let vx = (sx.mean_sq[k] - mx * mx).max(0.0);
            let vy = (sy.mean_sq[k] - my * my).max(0.0);
            let sd = (vx * vy).sqrt();
            // Cauchy–Schwarz bound, restored after cancellation error
            let cov = (scratch.cross[k] - mx * my).clamp(-sd, sd);

            let luminance = (2.0 * mx * my + self.c1) / (mx * mx + my * my + self.c1);
            let contrast = (2.0 * sd + self.c2) / (vx + vy + self.c2);
            let structure = (cov + self.c3) / (sd + self.c3);
            total += luminance * contrast * structure;
        }
        total / windows as f64
    }
}

/// SSIM of two patches with identical shape.
pub fn ssim_pair(x: &Patch, y: &Patch, cfg: &SsimConfig) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::PatchMismatch { left: x.shape(), right: y.shape() });
    }
    let kernel = SsimKernel::new(cfg);
    kernel.check(x)?;
    let mut scratch = Scratch::default();
    let sx = kernel.stats(x, &mut scratch);
    let sy = kernel.stats(y, &mut scratch);
    Ok(kernel.pair(x, &sx, y, &sy, &mut scratch))
}

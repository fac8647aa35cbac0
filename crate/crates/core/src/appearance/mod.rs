//! Appearance similarity between prediction crops.
//!
//! Crops are resampled to a common square size and compared with SSIM. The
//! all-pairs matrix can be computed naively or through the blocked path in
//! [`ssim_matrix_blocked`], which walks the upper triangle of an RCM-permuted
//! index space and skips blocks with no overlapping pairs.

mod matrix;
mod patch;
mod ssim;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use matrix::{ssim_matrix_blocked, ssim_matrix_naive, BlockedSsim};
pub use patch::{extract_patch, extract_patches, GrayImage};
pub use ssim::ssim_pair;

/// Row-major grayscale block with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Patch {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(Error::PatchShape { width, height, len: pixels.len() });
        }
        if let Some((offset, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::PixelRange { offset, value });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimConfig {
    pub c1: f64,
    pub c2: f64,
    /// Structure-term stabilizer; `2 * c2` unless overridden.
    pub c3: f64,
    /// Odd side length of the Gaussian window.
    pub window_size: usize,
    pub window_sigma: f64,
    /// Side length every crop is resampled to.
    pub resize_dim: usize,
}

impl Default for SsimConfig {
    fn default() -> Self {
        let c2 = 0.03f64 * 0.03;
        Self {
            c1: 0.01f64 * 0.01,
            c2,
            c3: 2.0 * c2,
            window_size: 11,
            window_sigma: 1.5,
            resize_dim: 48,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 3 || self.window_size.is_multiple_of(2) {
            return Err(Error::SsimConfig(format!("window_size {} must be odd and >= 3", self.window_size)));
        }
        if !(self.window_sigma > 0.0) {
            return Err(Error::SsimConfig(format!("window_sigma {} must be positive", self.window_sigma)));
        }
        if self.resize_dim < self.window_size {
            return Err(Error::SsimConfig(format!(
                "resize_dim {} is smaller than window_size {}",
                self.resize_dim, self.window_size
            )));
        }
        if [self.c1, self.c2, self.c3].iter().any(|c| !(*c > 0.0)) {
            return Err(Error::SsimConfig("stabilizer constants must be positive".into()));
        }
        Ok(())
    }
}

/// Symmetric appearance matrix with unit diagonal and entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceMatrix {
    values: Array2<f64>,
}

impl AppearanceMatrix {
    pub fn identity(n: usize) -> Self {
        Self { values: Array2::eye(n) }
    }

    /// Wraps raw values after checking symmetry, a unit diagonal and the
    /// `[0, 1]` range.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::Dimension { what: "appearance matrix columns", expected: n, actual: values.ncols() });
        }
        for i in 0..n {
            if values[[i, i]] != 1.0 {
                return Err(Error::SsimConfig(format!("appearance diagonal at {i} is not 1")));
            }
            for j in 0..n {
                let v = values[[i, j]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::SsimConfig(format!("appearance entry ({i}, {j}) = {v} outside [0, 1]")));
                }
                if v != values[[j, i]] {
                    return Err(Error::Asymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    fn set_pair(&mut self, i: usize, j: usize, v: f64) {
        self.values[[i, j]] = v;
        self.values[[j, i]] = v;
    }
}

/// Raw SSIM can be negative; the matrix only stores the `[0, 1]` part.
fn clamp_similarity(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

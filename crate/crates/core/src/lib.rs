//! QUBO-based suppression of redundant object-detection boxes.
//!
//! Overlapping detections are turned into a binary quadratic program whose
//! maximizer selects the boxes to keep. Penalties combine IoU, an
//! intersection-over-geometric-mean spatial term, SSIM appearance
//! similarity between the boxes' image crops, and optional confidence
//! weighting. Greedy NMS and Soft-NMS are included as baselines, together
//! with a COCO-style evaluation kit and a synthetic scene generator.

pub mod appearance;
pub mod cli;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod qubo;
pub mod reorder;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};

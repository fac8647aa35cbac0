//! Deterministic synthetic crowd scenes.
//!
//! Objects sit on a jittered grid. Each is a rectangle filled with its own
//! procedural texture; rectangles grow with the occlusion level until they
//! overlap their neighbours, and later objects are painted over earlier
//! ones. Detections are jittered copies of the ground truth with scores
//! that fall with visibility, plus redundant duplicates with decayed scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::appearance::GrayImage;
use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::geometry::BBox;
use crate::pipeline::Detection;

pub const CATEGORY: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_objects: usize,
    /// 0 keeps every object inside its own grid cell; 1 roughly doubles
    /// object extent.
    pub occlusion: f64,
    /// Side length of the square image.
    pub image_size: usize,
    pub image_id: i64,
}

impl SceneSpec {
    pub fn new(seed: u64, n_objects: usize, occlusion: f64, image_size: usize) -> Self {
        Self { seed, n_objects, occlusion, image_size, image_id: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_objects == 0 {
            return Err(Error::Config("a scene needs at least one object".into()));
        }
        if !(0.0..=1.0).contains(&self.occlusion) {
            return Err(Error::Config(format!("occlusion {} outside [0, 1]", self.occlusion)));
        }
        let cols = grid_cols(self.n_objects);
        if self.image_size < 8 * cols {
            return Err(Error::Config(format!(
                "image_size {} too small for {} objects",
                self.image_size, self.n_objects
            )));
        }
        Ok(())
    }
}

/// Where a detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Index into the scene's ground truth.
    pub object: usize,
    pub duplicate: bool,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: GrayImage,
    pub groundtruth: Vec<GroundTruth>,
    /// Descending score order.
    pub detections: Vec<Detection>,
    /// Aligned with `detections`.
    pub provenance: Vec<Provenance>,
    /// Fraction of each object's pixels left uncovered.
    pub visibility: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Texture {
    Grating { freq: f64, angle: f64, phase: f64 },
    Checker { period: f64 },
    Rings { freq: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Paint {
    texture: Texture,
    base: f64,
    contrast: f64,
}

impl Paint {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let texture = match rng.gen_range(0..3) {
            0 => Texture::Grating {
                freq: rng.gen_range(0.08..0.35),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            },
            1 => Texture::Checker { period: rng.gen_range(3.0..12.0) },
            _ => Texture::Rings { freq: rng.gen_range(0.15..0.6) },
        };
        let base = rng.gen_range(0.25..0.75);
        let contrast = rng.gen_range(0.15..0.25f64).min(base).min(1.0 - base);
        Self { texture, base, contrast }
    }

    /// Intensity at `(u, v)` relative to the box centre.
    fn sample(&self, u: f64, v: f64) -> f64 {
        let pattern = match self.texture {
            Texture::Grating { freq, angle, phase } => (freq * (u * angle.cos() + v * angle.sin()) + phase).sin(),
            Texture::Checker { period } => {
                let parity = ((u / period).floor() + (v / period).floor()) as i64;
                if parity.rem_euclid(2) == 0 { 1.0 } else { -1.0 }
            }
            Texture::Rings { freq } => (freq * u.hypot(v)).cos(),
        };
        self.base + self.contrast * pattern
    }
}

fn grid_cols(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Box clipped to `[0, size]²`; `None` if nothing remains.
fn clipped(x1: f64, y1: f64, x2: f64, y2: f64, size: f64) -> Option<BBox> {
    BBox::new(x1.max(0.0), y1.max(0.0), x2.min(size), y2.min(size)).ok()
}

fn jittered(rng: &mut ChaCha8Rng, b: &BBox, fraction: f64, size: f64) -> Option<BBox> {
    let (dw, dh) = (fraction * b.width(), fraction * b.height());
    let mut j = |d: f64| rng.gen_range(-d..=d);
    let (x1, y1, x2, y2) = (b.x1() + j(dw), b.y1() + j(dh), b.x2() + j(dw), b.y2() + j(dh));
    let out = clipped(x1, y1, x2, y2, size)?;
    (out.width() >= 2.0 && out.height() >= 2.0).then_some(out)
}

/// Renders a scene. Identical specs give identical scenes.
pub fn synth_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(spec.image_id as u64);

    let n = spec.n_objects;
    let size = spec.image_size as f64;
    let cols = grid_cols(n);
    let rows = n.div_ceil(cols);
    let (cell_w, cell_h) = (size / cols as f64, size / rows as f64);
    let grow = 0.7 + 0.8 * spec.occlusion;

    let mut boxes = Vec::with_capacity(n);
    let mut paints = Vec::with_capacity(n);
    for k in 0..n {
        let (col, row) = ((k % cols) as f64, (k / cols) as f64);
        let w = cell_w * grow * rng.gen_range(0.85..1.0);
        let h = cell_h * grow * rng.gen_range(0.85..1.0);
        let cx = (col + 0.5) * cell_w + rng.gen_range(-0.1..0.1) * cell_w;
        let cy = (row + 0.5) * cell_h + rng.gen_range(-0.1..0.1) * cell_h;
        let b = clipped(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0, size).expect("object inside the image");
        boxes.push(b);
        paints.push(Paint::random(&mut rng));
    }

    // painter's algorithm with an owner map for visibility
    let side = spec.image_size;
    let mut pixels = vec![0.0; side * side];
    let mut owner: Vec<Option<usize>> = vec![None; side * side];
    let bg_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    for y in 0..side {
        for x in 0..side {
            pixels[y * side + x] = 0.5 + 0.04 * (0.05 * x as f64 + 0.07 * y as f64 + bg_phase).sin();
        }
    }
    let mut area = vec![0usize; n];
    for (k, (b, paint)) in boxes.iter().zip(&paints).enumerate() {
        let (cx, cy) = ((b.x1() + b.x2()) / 2.0, (b.y1() + b.y2()) / 2.0);
        let xs = b.x1().floor() as usize..(b.x2().ceil() as usize).min(side);
        for y in b.y1().floor() as usize..(b.y2().ceil() as usize).min(side) {
            let py = y as f64 + 0.5;
            if py < b.y1() || py >= b.y2() {
                continue;
            }
            for x in xs.clone() {
                let px = x as f64 + 0.5;
                if px < b.x1() || px >= b.x2() {
                    continue;
                }
                pixels[y * side + x] = paint.sample(px - cx, py - cy);
                owner[y * side + x] = Some(k);
                area[k] += 1;
            }
        }
    }
    let mut visible = vec![0usize; n];
    for k in owner.into_iter().flatten() {
        visible[k] += 1;
    }
    let visibility: Vec<f64> =
        visible.iter().zip(&area).map(|(&v, &a)| if a == 0 { 0.0 } else { v as f64 / a as f64 }).collect();
    let image = GrayImage::new(side, side, pixels.into_iter().map(quantize).collect())?;

    let groundtruth: Vec<GroundTruth> =
        boxes.iter().map(|&bbox| GroundTruth { bbox, category: CATEGORY, image: spec.image_id }).collect();

    let mut generated: Vec<(Detection, Provenance)> = Vec::new();
    for (k, b) in boxes.iter().enumerate() {
        let confidence = rng.gen_range(0.6..0.98) * (0.3 + 0.7 * visibility[k]);
        let duplicates = rng.gen_range(0..=2);
        if let Some(bbox) = jittered(&mut rng, b, 0.04, size) {
            let score = confidence.clamp(0.01, 1.0);
            generated.push((
                Detection { bbox, score, category: CATEGORY, image: spec.image_id },
                Provenance { object: k, duplicate: false },
            ));
        }
        for _ in 0..duplicates {
            let decay = rng.gen_range(0.3..0.85);
            if let Some(bbox) = jittered(&mut rng, b, 0.12, size) {
                let score = (confidence * decay).clamp(0.01, 1.0);
                generated.push((
                    Detection { bbox, score, category: CATEGORY, image: spec.image_id },
                    Provenance { object: k, duplicate: true },
                ));
            }
        }
    }
    generated.sort_by(|a, b| b.0.score.total_cmp(&a.0.score));
    let (detections, provenance) = generated.into_iter().unzip();

    Ok(Scene { image, groundtruth, detections, provenance, visibility })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::intersection_matrix;
    use crate::reorder::{bandwidth, rcm_order, Permutation};

    #[test]
    fn deterministic() {
        let spec = SceneSpec::new(3, 10, 0.5, 160);
        let a = synth_scene(&spec).unwrap();
        let b = synth_scene(&spec).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.groundtruth, b.groundtruth);
        assert_eq!(a.detections, b.detections);
        let c = synth_scene(&SceneSpec { seed: 4, ..spec }).unwrap();
        assert_ne!(a.image, c.image);
        let d = synth_scene(&SceneSpec { image_id: 2, ..spec }).unwrap();
        assert_ne!(a.groundtruth[0].bbox, d.groundtruth[0].bbox);
    }

    #[test]
    fn zero_occlusion_gives_disjoint_objects() {
        for seed in 0..20 {
            let scene = synth_scene(&SceneSpec::new(seed, 1 + seed as usize * 3, 0.0, 256)).unwrap();
            let boxes: Vec<BBox> = scene.groundtruth.iter().map(|g| g.bbox).collect();
            assert_eq!(intersection_matrix(&boxes).upper_count(), 0, "seed {seed}");
            assert!(scene.visibility.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn occlusion_creates_overlap() {
        let scene = synth_scene(&SceneSpec::new(1, 16, 0.8, 256)).unwrap();
        let boxes: Vec<BBox> = scene.groundtruth.iter().map(|g| g.bbox).collect();
        assert!(intersection_matrix(&boxes).upper_count() > 10);
        assert!(scene.visibility.iter().any(|&v| v < 0.9));
    }

    #[test]
    fn detections_are_valid_and_sorted() {
        let scene = synth_scene(&SceneSpec::new(5, 25, 0.6, 320)).unwrap();
        assert_eq!(scene.detections.len(), scene.provenance.len());
        assert!(scene.detections.windows(2).all(|w| w[0].score >= w[1].score));
        for d in &scene.detections {
            assert!(d.score > 0.0 && d.score <= 1.0);
            assert!(d.bbox.x1() >= 0.0 && d.bbox.x2() <= 320.0);
        }
        let mains = scene.provenance.iter().filter(|p| !p.duplicate).count();
        assert_eq!(mains, 25);
        assert!(scene.image.pixels().iter().all(|&v| (v * 255.0).round() / 255.0 == v));
    }

    #[test]
    fn crowded_scene_benefits_from_reordering() {
        let scene = synth_scene(&SceneSpec::new(7, 64, 0.6, 512)).unwrap();
        let boxes: Vec<BBox> = scene.detections.iter().map(|d| d.bbox).collect();
        let inter = intersection_matrix(&boxes);
        let identity = bandwidth(&inter, &Permutation::identity(boxes.len()));
        let rcm = bandwidth(&inter, &rcm_order(&inter));
        assert!(rcm < identity, "rcm {rcm} vs identity {identity}");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(synth_scene(&SceneSpec::new(0, 0, 0.5, 100)).is_err());
        assert!(synth_scene(&SceneSpec::new(0, 4, 1.5, 100)).is_err());
        assert!(synth_scene(&SceneSpec::new(0, 100, 0.5, 40)).is_err());
    }
}

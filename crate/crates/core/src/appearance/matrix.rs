use rayon::prelude::*;

use super::ssim::{PatchStats, Scratch, SsimKernel};
use super::{clamp_similarity, AppearanceMatrix, Patch, SsimConfig};
use crate::error::{Error, Result};
use crate::geometry::IntersectionMatrix;
use crate::reorder::Permutation;

fn prepare(patches: &[Patch], cfg: &SsimConfig) -> Result<(SsimKernel, Vec<PatchStats>)> {
    cfg.validate()?;
    let kernel = SsimKernel::new(cfg);
    if let Some(first) = patches.first() {
        kernel.check(first)?;
        if let Some(other) = patches.iter().find(|p| p.shape() != first.shape()) {
            return Err(Error::PatchMismatch { left: first.shape(), right: other.shape() });
        }
    }
    let stats = patches
        .par_iter()
        .map_init(Scratch::default, |scratch, p| kernel.stats(p, scratch))
        .collect();
    Ok((kernel, stats))
}

/// Every pair, one after another. Reference for the blocked path.
pub fn ssim_matrix_naive(patches: &[Patch], cfg: &SsimConfig) -> Result<AppearanceMatrix> {
    let (kernel, stats) = prepare(patches, cfg)?;
    let n = patches.len();
    let mut out = AppearanceMatrix::identity(n);
    let mut scratch = Scratch::default();
    for i in 0..n {
        for j in i + 1..n {
            let v = kernel.pair(&patches[i], &stats[i], &patches[j], &stats[j], &mut scratch);
            out.set_pair(i, j, clamp_similarity(v));
        }
    }
    Ok(out)
}

/// Result of the blocked computation plus instrumentation.
#[derive(Debug, Clone)]
pub struct BlockedSsim {
    pub matrix: AppearanceMatrix,
    /// SSIM pair evaluations actually performed.
    pub evaluations: usize,
    /// Leaf blocks that were evaluated.
    pub blocks_computed: usize,
    /// Blocks dropped because their overlap sub-block was all zero.
    pub blocks_skipped: usize,
}

/// Half-open index block `[r0, r1) x [c0, c1)` in permuted coordinates.
#[derive(Debug, Clone, Copy)]
struct Block {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
}

impl Block {
    fn has_upper_pairs(&self) -> bool {
        self.r0 < self.r1 && self.c0 < self.c1 && self.r0 + 1 < self.c1
    }

    fn side(&self) -> usize {
        (self.r1 - self.r0).max(self.c1 - self.c0)
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.r0..self.r1).flat_map(move |p| (self.c0.max(p + 1)..self.c1).map(move |q| (p, q)))
    }
}

/// Prefix sums over the strictly-upper set entries of the permuted matrix.
struct UpperCounts {
    n: usize,
    sums: Vec<usize>,
}

impl UpperCounts {
    fn new(m: &IntersectionMatrix) -> Self {
        let n = m.len();
        let stride = n + 1;
        let mut sums = vec![0; stride * stride];
        for p in 0..n {
            for q in 0..n {
                let here = usize::from(p < q && m.get(p, q));
                sums[(p + 1) * stride + q + 1] =
                    here + sums[p * stride + q + 1] + sums[(p + 1) * stride + q] - sums[p * stride + q];
            }
        }
        Self { n, sums }
    }

    fn count(&self, b: &Block) -> usize {
        let s = self.n + 1;
        self.sums[b.r1 * s + b.c1] + self.sums[b.r0 * s + b.c0]
            - self.sums[b.r0 * s + b.c1]
            - self.sums[b.r1 * s + b.c0]
    }
}

fn subdivide(b: Block, threshold: usize, counts: &UpperCounts, leaves: &mut Vec<Block>, skipped: &mut usize) {
    if !b.has_upper_pairs() {
        return;
    }
    if counts.count(&b) == 0 {
        *skipped += 1;
        return;
    }
    if b.side() <= threshold {
        leaves.push(b);
        return;
    }
    let rm = b.r0 + (b.r1 - b.r0).div_ceil(2);
    let cm = b.c0 + (b.c1 - b.c0).div_ceil(2);
    for (r0, r1) in [(b.r0, rm), (rm, b.r1)] {
        for (c0, c1) in [(b.c0, cm), (cm, b.c1)] {
            subdivide(Block { r0, r1, c0, c1 }, threshold, counts, leaves, skipped);
        }
    }
}

/// Blocked all-pairs SSIM with omission of non-overlapping pairs.
///
/// The index space is taken in the order given by `perm`, and its upper
/// triangle is split recursively into quadrants until a block side is at
/// most `block_threshold`. Blocks whose permuted intersection sub-block has
/// no set entry are dropped; every upper pair inside a surviving leaf block
/// is evaluated, with leaves processed in parallel. Entries whose pair does
/// not overlap are exactly zero in the result.
pub fn ssim_matrix_blocked(
    patches: &[Patch],
    inter: &IntersectionMatrix,
    perm: &Permutation,
    cfg: &SsimConfig,
    block_threshold: usize,
) -> Result<BlockedSsim> {
    let n = patches.len();
    if inter.len() != n {
        return Err(Error::Dimension { what: "intersection matrix", expected: n, actual: inter.len() });
    }
    if perm.len() != n {
        return Err(Error::Permutation(format!("length {} does not match {n} patches", perm.len())));
    }
    // re-validate in case the permutation was assembled elsewhere
    let perm = Permutation::new(perm.order().to_vec())?;
    if block_threshold == 0 {
        return Err(Error::Config("block_threshold must be at least 1".into()));
    }
    let (kernel, stats) = prepare(patches, cfg)?;

    let permuted = perm.apply(inter);
    let counts = UpperCounts::new(&permuted);
    let mut leaves = Vec::new();
    let mut skipped = 0;
    subdivide(Block { r0: 0, r1: n, c0: 0, c1: n }, block_threshold, &counts, &mut leaves, &mut skipped);

    let order = perm.order();
    let results: Vec<Vec<(usize, usize, f64)>> = leaves
        .par_iter()
        .map_init(Scratch::default, |scratch, block| {
            block
                .pairs()
                .map(|(p, q)| {
                    let (i, j) = (order[p], order[q]);
                    let v = kernel.pair(&patches[i], &stats[i], &patches[j], &stats[j], scratch);
                    (i, j, v)
                })
                .collect()
        })
        .collect();

    let mut matrix = AppearanceMatrix::identity(n);
    let mut evaluations = 0;
    for (i, j, v) in results.into_iter().flatten() {
        evaluations += 1;
        if inter.get(i, j) {
            matrix.set_pair(i, j, clamp_similarity(v));
        }
    }
    Ok(BlockedSsim { matrix, evaluations, blocks_computed: leaves.len(), blocks_skipped: skipped })
}

//! Coefficient matrices for QUBO-based suppression.
//!
//! Every formulation shares the diagonal `w1 * v_i` and differs only in the
//! pairwise penalty placed (negated) on the off-diagonals:
//!
//! | formulation | penalty between `i != j`                         |
//! |-------------|--------------------------------------------------|
//! | QF          | `w2 P1`                                          |
//! | QSQS        | `w2 P1 + w3 P2`                                  |
//! | QSQS-C      | `(w2 P1 + w3 P2) v_i v_j`                        |
//! | QAQS        | `(w2 P1 + w3 P2) A_ij`                           |
//! | QAQS-C      | `(w2 P1 + w3 P2) A_ij v_i v_j`                   |
//!
//! `P1` is IoU, `P2` the intersection over the geometric mean of areas and
//! `A` the clamped SSIM between crops. Matrices are built for maximization.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::appearance::AppearanceMatrix;
use crate::error::{Error, Result};
use crate::geometry::{hull_slack, iou, spatial_feature, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { w1: 0.4, w2: 0.3, w3: 0.3 }
    }
}

impl Weights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self> {
        let w = Self { w1, w2, w3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { w1, w2, w3 } = *self;
        if [w1, w2, w3].iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Weights { w1, w2, w3, reason: "weights must be finite and nonnegative" });
        }
        if (w1 + w2 + w3 - 1.0).abs() > 1e-9 {
            return Err(Error::Weights { w1, w2, w3, reason: "weights must sum to 1" });
        }
        Ok(())
    }
}

/// How the overlap terms are sparsified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseMode {
    #[default]
    Iou,
    /// Pairs with negative GIoU contribute nothing.
    GiouSparse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTerms {
    pub p1: Array2<f64>,
    pub p2: Array2<f64>,
    pub mode: PairwiseMode,
}

impl PairwiseTerms {
    pub fn len(&self) -> usize {
        self.p1.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn pairwise_terms(boxes: &[BBox], mode: PairwiseMode) -> PairwiseTerms {
    let n = boxes.len();
    let mut p1 = Array2::zeros((n, n));
    let mut p2 = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&boxes[i], &boxes[j]);
            let overlap = iou(a, b);
            // GIoU < 0  <=>  IoU < hull slack
            if overlap == 0.0 || (mode == PairwiseMode::GiouSparse && overlap < hull_slack(a, b)) {
                continue;
            }
            let sf = spatial_feature(a, b);
            p1[[i, j]] = overlap;
            p1[[j, i]] = overlap;
            p2[[i, j]] = sf;
            p2[[j, i]] = sf;
        }
    }
    PairwiseTerms { p1, p2, mode }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Qf,
    Qsqs,
    QsqsC,
    Qaqs,
    QaqsC,
}

impl Formulation {
    pub const ALL: [Formulation; 5] = [Self::Qf, Self::Qsqs, Self::QsqsC, Self::Qaqs, Self::QaqsC];

    pub fn uses_appearance(self) -> bool {
        matches!(self, Self::Qaqs | Self::QaqsC)
    }

    pub fn confidence_weighted(self) -> bool {
        matches!(self, Self::QsqsC | Self::QaqsC)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Qf => "qf",
            Self::Qsqs => "qsqs",
            Self::QsqsC => "qsqs_c",
            Self::Qaqs => "qaqs",
            Self::QaqsC => "qaqs_c",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub q: Array2<f64>,
    pub formulation: Formulation,
}

impl CoefficientMatrix {
    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nnz(&self) -> usize {
        self.q.iter().filter(|&&v| v != 0.0).count()
    }
}

fn check_confidences(v: &[f64]) -> Result<()> {
    match v.iter().position(|&s| !(s > 0.0 && s <= 1.0)) {
        Some(index) => Err(Error::Confidence { index, value: v[index] }),
        None => Ok(()),
    }
}

fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, actual })
    }
}

/// Shared builder. Penalties are multiplied in a fixed order (base, then
/// appearance, then `v_i`, then `v_j`) so that every factor in `[0, 1]`
/// can only shrink the magnitude under rounding as well.
pub fn build(
    formulation: Formulation,
    v: &[f64],
    terms: &PairwiseTerms,
    appearance: Option<&AppearanceMatrix>,
    w: &Weights,
) -> Result<CoefficientMatrix> {
    w.validate()?;
    let n = v.len();
    check_confidences(v)?;
    check_dim("pairwise terms", n, terms.len())?;
    if formulation == Formulation::Qf && w.w3 != 0.0 {
        return Err(Error::Weights { w1: w.w1, w2: w.w2, w3: w.w3, reason: "QF requires w3 = 0" });
    }
    let appearance = match (formulation.uses_appearance(), appearance) {
        (true, Some(a)) => {
            check_dim("appearance matrix", n, a.len())?;
            Some(a)
        }
        (true, None) => return Err(Error::Config(format!("{} needs an appearance matrix", formulation.name()))),
        (false, _) => None,
    };

    let mut q = Array2::zeros((n, n));
    for i in 0..n {
        q[[i, i]] = w.w1 * v[i];
        for j in i + 1..n {
            let mut penalty = match formulation {
                Formulation::Qf => w.w2 * terms.p1[[i, j]],
                _ => w.w2 * terms.p1[[i, j]] + w.w3 * terms.p2[[i, j]],
            };
            if let Some(a) = appearance {
                penalty *= a.get(i, j);
            }
            if formulation.confidence_weighted() {
                penalty = penalty * v[i] * v[j];
            }
            let entry = 0.0 - penalty;
            q[[i, j]] = entry;
            q[[j, i]] = entry;
        }
    }
    Ok(CoefficientMatrix { q, formulation })
}

pub fn build_qf(v: &[f64], terms: &PairwiseTerms, w: &Weights) -> Result<CoefficientMatrix> {
    build(Formulation::Qf, v, terms, None, w)
}

pub fn build_qsqs(v: &[f64], terms: &PairwiseTerms, w: &Weights) -> Result<CoefficientMatrix> {
    build(Formulation::Qsqs, v, terms, None, w)
}

pub fn build_qsqs_c(v: &[f64], terms: &PairwiseTerms, w: &Weights) -> Result<CoefficientMatrix> {
    build(Formulation::QsqsC, v, terms, None, w)
}

pub fn build_qaqs(v: &[f64], terms: &PairwiseTerms, a: &AppearanceMatrix, w: &Weights) -> Result<CoefficientMatrix> {
    build(Formulation::Qaqs, v, terms, Some(a), w)
}

pub fn build_qaqs_c(v: &[f64], terms: &PairwiseTerms, a: &AppearanceMatrix, w: &Weights) -> Result<CoefficientMatrix> {
    build(Formulation::QaqsC, v, terms, Some(a), w)
}

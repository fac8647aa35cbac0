//! Axis-aligned box arithmetic: IoU, GIoU, the intersection-over-geometric-mean
//! spatial feature, and the binary overlap indicator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in corner form, `x1 < x2` and `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 >= x2 || y1 >= y2 {
            return Err(Error::DegenerateBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from the COCO `[x, y, width, height]` wire form.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Area of the intersection, zero when the boxes only touch or are apart.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Smallest axis-aligned box covering both.
    pub fn hull(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn overlaps(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0.0
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// The hull-slack ratio `|C \ (a ∪ b)| / |C|`; GIoU is IoU minus this.
pub fn hull_slack(a: &BBox, b: &BBox) -> f64 {
    let hull = a.hull(b).area();
    let union = a.area() + b.area() - a.intersection_area(b);
    (hull - union) / hull
}

pub fn giou(a: &BBox, b: &BBox) -> f64 {
    iou(a, b) - hull_slack(a, b)
}

/// `|a ∩ b| / sqrt(|a| |b|)`.
pub fn spatial_feature(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() * b.area()).sqrt()
}

/// Symmetric 0/1 overlap indicator with ones on the diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntersectionMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl IntersectionMatrix {
    pub fn identity(n: usize) -> Self {
        let mut bits = vec![false; n * n];
        for i in 0..n {
            bits[i * n + i] = true;
        }
        Self { n, bits }
    }

    /// Builds a matrix from an arbitrary symmetric predicate over pairs `i < j`.
    pub fn from_fn(n: usize, mut overlapped: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                if overlapped(i, j) {
                    m.bits[i * n + j] = true;
                    m.bits[j * n + i] = true;
                }
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    /// Off-diagonal neighbours of `i` in ascending index order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.bits[i * self.n..(i + 1) * self.n];
        row.iter()
            .enumerate()
            .filter(move |&(j, &set)| set && j != i)
            .map(|(j, _)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Number of set entries strictly above the diagonal.
    pub fn upper_count(&self) -> usize {
        (0..self.n)
            .map(|i| (i + 1..self.n).filter(|&j| self.get(i, j)).count())
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub fn intersection_matrix(boxes: &[BBox]) -> IntersectionMatrix {
    IntersectionMatrix::from_fn(boxes.len(), |i, j| boxes[i].overlaps(&boxes[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn rejects_degenerate() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(BBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::from_xywh(3.0, 3.0, 0.0, 4.0).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 1.0, 1.0), &b(5.0, 5.0, 6.0, 6.0)), 0.0);
        // intersection 1, union 4 + 4 - 1
        assert!((iou(&a, &b(1.0, 1.0, 3.0, 3.0)) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn giou_examples() {
        let unit = b(0.0, 0.0, 1.0, 1.0);
        assert_eq!(giou(&unit, &unit), 1.0);
        assert_eq!(giou(&unit, &b(1.0, 0.0, 2.0, 1.0)), 0.0);
        assert!((giou(&unit, &b(2.0, 0.0, 3.0, 1.0)) + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn spatial_feature_examples() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(spatial_feature(&a, &a), 1.0);
        assert_eq!(spatial_feature(&a, &b(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert_eq!(spatial_feature(&a, &b(1.0, 1.0, 3.0, 3.0)), 0.25);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        let m = intersection_matrix(&[b(0.0, 0.0, 1.0, 1.0), b(1.0, 0.0, 2.0, 1.0)]);
        assert_eq!(m, IntersectionMatrix::identity(2));
    }

    #[test]
    fn intersection_matrix_examples() {
        assert!(intersection_matrix(&[]).is_empty());
        let m = intersection_matrix(&[
            b(0.0, 0.0, 2.0, 2.0),
            b(1.0, 1.0, 3.0, 3.0),
            b(10.0, 10.0, 11.0, 11.0),
        ]);
        let expected = [[true, true, false], [true, true, false], [false, false, true]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                assert_eq!(m.get(i, j), e, "({i}, {j})");
            }
        }
        assert_eq!(m.upper_count(), 1);
        assert_eq!(m.degree(0), 1);
        assert_eq!(m.degree(2), 0);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..100.0f64, 0.0..100.0f64, 0.5..60.0f64, 0.5..60.0f64)
            .prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn pairwise_scores_are_symmetric_and_ordered(a in arb_box(), c in arb_box()) {
            let (i, g, s) = (iou(&a, &c), giou(&a, &c), spatial_feature(&a, &c));
            prop_assert_eq!(i, iou(&c, &a));
            prop_assert_eq!(g, giou(&c, &a));
            prop_assert_eq!(s, spatial_feature(&c, &a));
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((-1.0..=1.0).contains(&g));
            prop_assert!(g <= i + 1e-12);
            prop_assert!(s + 1e-12 >= i);
        }

        #[test]
        fn giou_equals_iou_iff_hull_is_union(a in arb_box(), c in arb_box()) {
            let slack = hull_slack(&a, &c);
            prop_assert!(slack >= -1e-12);
            if slack.abs() < 1e-12 {
                prop_assert!((giou(&a, &c) - iou(&a, &c)).abs() < 1e-12);
            } else {
                prop_assert!(giou(&a, &c) < iou(&a, &c));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn intersection_matrix_agrees_with_iou(boxes in prop::collection::vec(arb_box(), 0..24)) {
            let m = intersection_matrix(&boxes);
            for i in 0..boxes.len() {
                prop_assert!(m.get(i, i));
                for j in 0..boxes.len() {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                    if i != j {
                        prop_assert_eq!(m.get(i, j), iou(&boxes[i], &boxes[j]) > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn identical_boxes_score_one_everywhere() {
        let a = b(3.5, 1.25, 9.0, 4.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(giou(&a, &a), 1.0);
        assert_eq!(spatial_feature(&a, &a), 1.0);
        assert!(iou(&a, &b(3.5, 1.25, 9.0, 4.5)) < 1.0);
    }
}

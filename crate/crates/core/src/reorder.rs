//! Reverse Cuthill–McKee ordering of the intersection matrix.
//!
//! Moving the non-zeros of the overlap indicator towards the diagonal leaves
//! large all-zero off-diagonal blocks, which the blocked SSIM computation
//! skips outright.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::IntersectionMatrix;

/// A bijection on `0..n`. `order()[k]` is the original index placed at
/// position `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n {
                return Err(Error::Permutation(format!("index {i} out of range 0..{n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Permutation(format!("index {i} appears twice")));
            }
        }
        Ok(Self { order })
    }

    pub fn identity(n: usize) -> Self {
        Self { order: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `positions()[i]` is the position of original index `i`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (k, &i) in self.order.iter().enumerate() {
            pos[i] = k;
        }
        pos
    }

    pub fn inverse(&self) -> Self {
        Self { order: self.positions() }
    }

    /// Symmetrically permuted matrix: entry `(p, q)` is `m[order[p]][order[q]]`.
    pub fn apply(&self, m: &IntersectionMatrix) -> IntersectionMatrix {
        IntersectionMatrix::from_fn(m.len(), |p, q| m.get(self.order[p], self.order[q]))
    }
}

/// Reverse Cuthill–McKee.
///
/// Components are visited in order of their lowest original index. Each is
/// traversed breadth-first from its minimum-degree vertex (lowest index on
/// ties), enqueueing unvisited neighbours by ascending degree then index, and
/// the component's visit order is reversed in place. Reversing per component
/// rather than globally gives the same bandwidth and keeps a matrix without
/// overlaps in identity order.
pub fn rcm_order(m: &IntersectionMatrix) -> Permutation {
    let n = m.len();
    let degree: Vec<usize> = (0..n).map(|i| m.degree(i)).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Collect the component to find its start vertex.
        let mut component = vec![seed];
        visited[seed] = true;
        let mut head = 0;
        while head < component.len() {
            let v = component[head];
            head += 1;
            for u in m.neighbors(v) {
                if !visited[u] {
                    visited[u] = true;
                    component.push(u);
                }
            }
        }
        let start = *component
            .iter()
            .min_by_key(|&&v| (degree[v], v))
            .expect("component is non-empty");
        for &v in &component {
            visited[v] = false;
        }

        let begin = order.len();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = m.neighbors(v).filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
        order[begin..].reverse();
    }

    Permutation { order }
}

/// Maximum `|pos(i) - pos(j)|` over set entries.
pub fn bandwidth(m: &IntersectionMatrix, perm: &Permutation) -> usize {
    let pos = perm.positions();
    (0..m.len())
        .flat_map(|i| m.neighbors(i).map(move |j| (i, j)))
        .map(|(i, j)| pos[i].abs_diff(pos[j]))
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn from_edges(n: usize, edges: &[(usize, usize)]) -> IntersectionMatrix {
        IntersectionMatrix::from_fn(n, |i, j| edges.contains(&(i, j)) || edges.contains(&(j, i)))
    }

    fn random_sparse(n: usize, p: f64, seed: u64) -> IntersectionMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        from_edges(n, &edges)
    }

    fn degree_multiset(m: &IntersectionMatrix) -> Vec<usize> {
        let mut d: Vec<usize> = (0..m.len()).map(|i| m.degree(i)).collect();
        d.sort_unstable();
        d
    }

    #[test]
    fn rejects_invalid_permutations() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        assert!(Permutation::new(vec![1, 0]).is_ok());
    }

    #[test]
    fn isolated_vertices_keep_identity_order() {
        let m = IntersectionMatrix::identity(6);
        assert_eq!(rcm_order(&m), Permutation::identity(6));
        assert_eq!(bandwidth(&m, &Permutation::identity(6)), 0);
    }

    #[test]
    fn scrambled_path_gets_bandwidth_one() {
        // path 0-1-2-3 relabelled as 2-0-3-1
        let m = from_edges(4, &[(2, 0), (0, 3), (3, 1)]);
        assert_eq!(bandwidth(&m, &Permutation::identity(4)), 3);
        let perm = rcm_order(&m);
        assert_eq!(bandwidth(&m, &perm), 1);
        // brute-force check over every adjacent pair in the returned order
        let p = perm.order();
        for w in p.windows(2) {
            assert!(m.get(w[0], w[1]));
        }
    }

    #[test]
    fn bandwidth_examples() {
        let n = 7;
        let dense = IntersectionMatrix::from_fn(n, |_, _| true);
        assert_eq!(bandwidth(&dense, &Permutation::identity(n)), n - 1);
        assert_eq!(bandwidth(&dense, &Permutation::new(vec![3, 1, 4, 0, 6, 5, 2]).unwrap()), n - 1);
        let tri = IntersectionMatrix::from_fn(n, |i, j| j == i + 1);
        assert_eq!(bandwidth(&tri, &Permutation::identity(n)), 1);
    }

    #[test]
    fn random_sparse_permutation_properties() {
        for seed in 0..20 {
            let m = random_sparse(50, 0.05, seed);
            let perm = rcm_order(&m);
            assert!(Permutation::new(perm.order().to_vec()).is_ok());
            let permuted = perm.apply(&m);
            assert_eq!(permuted.nnz(), m.nnz());
            assert_eq!(degree_multiset(&permuted), degree_multiset(&m));
            // undoing the permutation restores the original
            assert_eq!(perm.inverse().apply(&permuted), m);
            // bandwidth is invariant between the two views
            assert_eq!(bandwidth(&permuted, &Permutation::identity(50)), bandwidth(&m, &perm));
        }
    }

    #[test]
    fn components_are_ordered_by_lowest_index() {
        // components {0, 3} and {1, 2}
        let m = from_edges(4, &[(0, 3), (1, 2)]);
        let perm = rcm_order(&m);
        assert_eq!(perm.order(), &[3, 0, 2, 1]);
    }

    #[test]
    fn start_vertex_has_minimum_degree() {
        // star centred on 0 plus a tail 3-4; vertex 4 has degree 1 and the
        // lowest index among degree-1 vertices is 1
        let m = from_edges(5, &[(0, 1), (0, 2), (0, 3), (3, 4)]);
        let perm = rcm_order(&m);
        // CM from 1: 1, 0, then 0's neighbours by degree: 2 (1), 3 (2); then 4
        assert_eq!(perm.order(), &[4, 3, 2, 0, 1]);
    }
}

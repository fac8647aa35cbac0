use std::time::Instant;

use ndarray::Array2;

/// Largest induced width the eliminator accepts; tables hold `2^width` entries.
pub(crate) const WIDTH_LIMIT: usize = 20;

/// Table over the variables in `scope` (ascending local ids); bit `t` of
/// an index is the value of `scope[t]`.
#[derive(Debug, Clone)]
struct Factor {
    scope: Vec<usize>,
    table: Vec<f64>,
}

/// Greedy min-degree elimination order (ties by index), or `None` when the
/// induced width exceeds `WIDTH_LIMIT`.
fn elimination_order(m: &Array2<f64>) -> Option<Vec<usize>> {
    let k = m.nrows();
    let mut adj: Vec<Vec<bool>> = (0..k).map(|i| (0..k).map(|j| i != j && m[[i, j]] != 0.0).collect()).collect();
    let mut alive = vec![true; k];
    let mut order = Vec::with_capacity(k);
    for _ in 0..k {
        let degree = |v: usize, adj: &Vec<Vec<bool>>| (0..k).filter(|&u| alive[u] && adj[v][u]).count();
        let v = (0..k).filter(|&v| alive[v]).min_by_key(|&v| (degree(v, &adj), v))?;
        let nbrs: Vec<usize> = (0..k).filter(|&u| alive[u] && adj[v][u]).collect();
        if nbrs.len() > WIDTH_LIMIT {
            return None;
        }
        for &a in &nbrs {
            for &b in &nbrs {
                if a != b {
                    adj[a][b] = true;
                }
            }
        }
        alive[v] = false;
        order.push(v);
    }
    Some(order)
}

/// Table index of a factor whose `t`-th variable sits at bit `positions[t]`
/// of `assignment`.
fn project(positions: &[usize], assignment: usize) -> usize {
    positions.iter().enumerate().fold(0, |acc, (t, &p)| acc | ((assignment >> p) & 1) << t)
}

/// Exact maximization of `xᵀ M x` by max-sum bucket elimination.
///
/// Returns `None` when the coupling graph is too wide for the table limit
/// or the deadline passes. Ties at each back-substitution step go to 0.
pub(crate) fn solve_by_elimination(m: &Array2<f64>, deadline: Instant) -> Option<Vec<bool>> {
    let k = m.nrows();
    let order = elimination_order(m)?;
    let mut rank = vec![0; k];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }

    let mut buckets: Vec<Vec<Factor>> = vec![Vec::new(); k];
    for i in 0..k {
        buckets[i].push(Factor { scope: vec![i], table: vec![0.0, m[[i, i]]] });
        for j in i + 1..k {
            if m[[i, j]] != 0.0 {
                let first = if rank[i] < rank[j] { i } else { j };
                buckets[first].push(Factor { scope: vec![i, j], table: vec![0.0, 0.0, 0.0, 2.0 * m[[i, j]]] });
            }
        }
    }

    // (variable, scope of its decision table, packed decisions)
    let mut decisions: Vec<(usize, Vec<usize>, Vec<u64>)> = Vec::with_capacity(k);
    for &v in &order {
        if Instant::now() >= deadline {
            return None;
        }
        let bucket = std::mem::take(&mut buckets[v]);
        let mut scope: Vec<usize> = bucket.iter().flat_map(|f| f.scope.iter().copied()).filter(|&u| u != v).collect();
        scope.sort_unstable();
        scope.dedup();

        // local scope positions with v appended as the highest bit
        let width = scope.len();
        let position = |u: usize| if u == v { width } else { scope.binary_search(&u).expect("in scope") };
        let maps: Vec<Vec<usize>> = bucket.iter().map(|f| f.scope.iter().map(|&u| position(u)).collect()).collect();

        let size = 1usize << width;
        let mut table = Vec::with_capacity(size);
        let mut chosen = vec![0u64; size.div_ceil(64)];
        for a in 0..size {
            let mut value = [0.0; 2];
            for (xv, slot) in value.iter_mut().enumerate() {
                let full = a | xv << width;
                *slot = bucket.iter().zip(&maps).map(|(f, p)| f.table[project(p, full)]).sum();
            }
            if value[1] > value[0] {
                chosen[a / 64] |= 1 << (a % 64);
                table.push(value[1]);
            } else {
                table.push(value[0]);
            }
        }
        if let Some(&next) = scope.iter().min_by_key(|&&u| rank[u]) {
            buckets[next].push(Factor { scope: scope.clone(), table });
        }
        decisions.push((v, scope, chosen));
    }

    let mut x = vec![false; k];
    for (v, scope, chosen) in decisions.iter().rev() {
        let a = scope.iter().enumerate().fold(0usize, |acc, (t, &u)| acc | (x[u] as usize) << t);
        x[*v] = chosen[a / 64] >> (a % 64) & 1 == 1;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::random_symmetric;
    use super::super::{evaluate, solve_exhaustive, QuboProblem};
    use super::*;
    use ndarray::array;
    use std::time::Duration;

    fn far() -> Instant {
        Instant::now() + Duration::from_secs(60)
    }

    #[test]
    fn small_examples() {
        assert_eq!(solve_by_elimination(&array![[0.9, -0.5], [-0.5, 0.8]], far()).unwrap(), vec![true, false]);
        assert_eq!(solve_by_elimination(&Array2::zeros((0, 0)), far()).unwrap(), Vec::<bool>::new());
        assert_eq!(solve_by_elimination(&Array2::eye(3), far()).unwrap(), vec![true; 3]);
    }

    #[test]
    fn optimal_value_matches_exhaustive() {
        for seed in 0..120 {
            let n = 2 + seed as usize % 14;
            let density = if seed % 3 == 0 { 1.0 } else { 0.2 };
            let q = random_symmetric(n, density, seed);
            let x = solve_by_elimination(&q, far()).unwrap();
            let exact = solve_exhaustive(&QuboProblem::maximize(q.clone()).unwrap()).unwrap();
            assert!((evaluate(&q, &x) - exact.objective).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn wide_graphs_are_declined() {
        let n = WIDTH_LIMIT + 3;
        let q = Array2::from_elem((n, n), -0.1);
        assert!(solve_by_elimination(&q, far()).is_none());
    }

    #[test]
    fn long_chain_is_cheap() {
        // a path of 400 variables has width 1
        let n = 400;
        let mut q = Array2::zeros((n, n));
        for i in 0..n {
            q[[i, i]] = 1.0;
            if i + 1 < n {
                q[[i, i + 1]] = -0.6;
                q[[i + 1, i]] = -0.6;
            }
        }
        let x = solve_by_elimination(&q, far()).unwrap();
        // alternate ones: every other variable selected
        assert_eq!(x.iter().filter(|&&b| b).count(), 200);
        assert!(x.windows(2).all(|w| !(w[0] && w[1])));
    }
}

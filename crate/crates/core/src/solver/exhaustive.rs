use std::time::Instant;

use super::{evaluate, lex_less, QuboProblem, QuboSolution};
use crate::error::{Error, Result};

/// Largest problem the exhaustive oracle will enumerate.
pub const EXHAUSTIVE_LIMIT: usize = 25;

/// Enumerates all `2^n` assignments in Gray-code order.
///
/// The running objective is updated incrementally; any assignment within a
/// rounding tolerance of the incumbent is re-scored with the canonical
/// evaluation before comparison, and exact ties go to the lexicographically
/// smallest assignment.
pub fn solve_exhaustive(problem: &QuboProblem) -> Result<QuboSolution> {
    let n = problem.len();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge { n, limit: EXHAUSTIVE_LIMIT });
    }
    let start = Instant::now();
    let m = problem.as_maximization();
    let scale: f64 = 1.0 + m.iter().map(|v| v.abs()).sum::<f64>();
    let tol = 1e-7 * scale;

    let mut x = vec![false; n];
    // field[i] = sum over j != i of m[i][j] x_j
    let mut field = vec![0.0; n];
    let mut current = 0.0;
    let mut best_x = x.clone();
    let mut best = 0.0;

    for step in 1u64..(1u64 << n) {
        let bit = step.trailing_zeros() as usize;
        let gain = m[[bit, bit]] + 2.0 * field[bit];
        let sign = if x[bit] { -1.0 } else { 1.0 };
        current += sign * gain;
        x[bit] = !x[bit];
        for j in 0..n {
            if j != bit {
                field[j] += sign * m[[j, bit]];
            }
        }
        if current >= best - tol {
            let exact = evaluate(&m, &x);
            if exact > best || (exact == best && lex_less(&x, &best_x)) {
                best = exact;
                best_x.copy_from_slice(&x);
            }
        }
    }

    Ok(QuboSolution {
        objective: problem.objective(&best_x),
        assignment: best_x,
        optimal: true,
        solve_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn max(q: Array2<f64>) -> QuboSolution {
        solve_exhaustive(&QuboProblem::maximize(q).unwrap()).unwrap()
    }

    #[test]
    fn small_examples() {
        let s = max(array![[1.0]]);
        assert_eq!((s.assignment, s.objective, s.optimal), (vec![true], 1.0, true));

        let s = max(array![[1.0, 0.0], [0.0, -1.0]]);
        assert_eq!((s.assignment, s.objective), (vec![true, false], 1.0));

        // candidates 0 / 0.9 / 0.8 / 0.7
        let s = max(array![[0.9, -0.5], [-0.5, 0.8]]);
        assert_eq!((s.assignment, s.objective), (vec![true, false], 0.9));
    }

    #[test]
    fn empty_and_zero_problems() {
        let s = max(Array2::zeros((0, 0)));
        assert!(s.assignment.is_empty());
        assert_eq!(s.objective, 0.0);
        let s = max(Array2::zeros((6, 6)));
        assert_eq!(s.assignment, vec![false; 6]);
    }

    #[test]
    fn ties_go_to_lexicographically_smallest() {
        // x0 and x1 are interchangeable; picking either alone scores 1
        let s = max(array![[1.0, -1.0], [-1.0, 1.0]]);
        assert_eq!(s.assignment, vec![false, true]);
    }

    #[test]
    fn refuses_oversized_problems() {
        let p = QuboProblem::maximize(Array2::zeros((26, 26))).unwrap();
        let err = solve_exhaustive(&p).unwrap_err();
        assert!(matches!(err, Error::TooLarge { n: 26, limit: 25 }));
        assert!(err.to_string().contains("25"));
    }

    #[test]
    fn agrees_with_plain_enumeration() {
        use super::super::testutil::random_symmetric;
        for seed in 0..25 {
            let n = 1 + seed as usize % 9;
            let q = random_symmetric(n, 0.7, seed);
            let s = max(q.clone());
            let mut best = (f64::NEG_INFINITY, vec![]);
            for mask in 0u32..(1 << n) {
                let x: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                let v = evaluate(&q, &x);
                if v > best.0 || (v == best.0 && x < best.1) {
                    best = (v, x);
                }
            }
            assert_eq!(s.objective, best.0);
            assert_eq!(s.assignment, best.1);
        }
    }
}

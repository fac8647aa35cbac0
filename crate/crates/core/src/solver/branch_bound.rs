use std::time::Instant;

use ndarray::Array2;

use super::elimination::solve_by_elimination;
use super::{evaluate, lex_less, QuboProblem, QuboSolution, SolverConfig};

/// Nodes between deadline checks.
const CLOCK_INTERVAL: u64 = 1024;

/// Components larger than this are first tried by bucket elimination.
const SEARCH_LIMIT: usize = 24;

/// Depth-first branch-and-bound.
///
/// The coupling graph is split into connected components, each solved
/// independently. Within a component variables are fixed in descending
/// `|Q_ii|` order (ties by index). The bound at a node is the value of the
/// fixed part plus, for each free variable, the nonnegative part of its
/// best achievable marginal: its diagonal, twice its couplings to variables
/// fixed at one, and its positive couplings to other free variables.
///
/// Components with more than `SEARCH_LIMIT` variables and a small induced
/// width are solved exactly by max-sum bucket elimination instead; there,
/// ties among optimal assignments are resolved deterministically but not
/// necessarily lexicographically.
///
/// If the time budget runs out the best incumbent is returned with
/// `optimal = false`.
pub fn solve_branch_and_bound(problem: &QuboProblem, cfg: &SolverConfig) -> QuboSolution {
    let start = Instant::now();
    let deadline = start + cfg.time_budget;
    let m = problem.as_maximization();
    let n = m.nrows();
    let mut assignment = vec![false; n];
    let mut optimal = true;

    for component in components(&m) {
        if let [i] = component[..] {
            assignment[i] = m[[i, i]] > 0.0;
            continue;
        }
        let k = component.len();
        let sub = Array2::from_shape_fn((k, k), |(a, b)| m[[component[a], component[b]]]);
        if k > SEARCH_LIMIT {
            if let Some(x) = solve_by_elimination(&sub, deadline) {
                for (local, &global) in component.iter().enumerate() {
                    assignment[global] = x[local];
                }
                continue;
            }
        }
        let mut search = Search::new(&sub, deadline);
        search.run();
        optimal &= !search.timed_out;
        for (local, &global) in component.iter().enumerate() {
            assignment[global] = search.best_x[local];
        }
    }

    QuboSolution {
        objective: problem.objective(&assignment),
        assignment,
        optimal,
        solve_time: start.elapsed(),
    }
}

/// Connected components of the non-zero coupling graph, each sorted, in
/// order of their lowest index.
fn components(m: &Array2<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut comp = vec![root];
        let mut head = 0;
        while head < comp.len() {
            let v = comp[head];
            head += 1;
            for u in 0..n {
                if !seen[u] && u != v && m[[v, u]] != 0.0 {
                    seen[u] = true;
                    comp.push(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

struct Search<'a> {
    m: &'a Array2<f64>,
    order: Vec<usize>,
    x: Vec<bool>,
    best_x: Vec<bool>,
    best: f64,
    tol: f64,
    nodes: u64,
    deadline: Instant,
    timed_out: bool,
}

impl<'a> Search<'a> {
    fn new(m: &'a Array2<f64>, deadline: Instant) -> Self {
        let k = m.nrows();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| m[[b, b]].abs().total_cmp(&m[[a, a]].abs()).then(a.cmp(&b)));
        let scale: f64 = 1.0 + m.iter().map(|v| v.abs()).sum::<f64>();
        let (best_x, best) = greedy_start(m);
        Self {
            m,
            order,
            x: vec![false; k],
            best_x,
            best,
            tol: 1e-9 * scale,
            nodes: 0,
            deadline,
            timed_out: false,
        }
    }

    fn run(&mut self) {
        let k = self.m.nrows();
        let marginal: Vec<f64> = (0..k).map(|i| self.m[[i, i]]).collect();
        let positive: Vec<f64> = (0..k)
            .map(|i| (0..k).filter(|&j| j != i).map(|j| self.m[[i, j]].max(0.0)).sum())
            .collect();
        self.descend(0, 0.0, &marginal, &positive);
    }

    /// `marginal[i]`: diagonal plus twice the couplings to variables fixed at
    /// one. `positive[i]`: positive couplings to other free variables.
    fn descend(&mut self, depth: usize, fixed: f64, marginal: &[f64], positive: &[f64]) {
        if self.timed_out {
            return;
        }
        self.nodes += 1;
        if self.nodes.is_multiple_of(CLOCK_INTERVAL) && Instant::now() >= self.deadline {
            self.timed_out = true;
            return;
        }

        let k = self.m.nrows();
        if depth == k {
            if fixed >= self.best - self.tol {
                let exact = evaluate(self.m, &self.x);
                if exact > self.best || (exact == self.best && lex_less(&self.x, &self.best_x)) {
                    self.best = exact;
                    self.best_x.copy_from_slice(&self.x);
                }
            }
            return;
        }

        let free = &self.order[depth..];
        let bound = fixed + free.iter().map(|&i| (marginal[i] + positive[i]).max(0.0)).sum::<f64>();
        if bound < self.best - self.tol {
            return;
        }

        let v = self.order[depth];
        let rest = &self.order[depth + 1..];
        let mut next_positive = positive.to_vec();
        for &i in rest {
            next_positive[i] -= self.m[[i, v]].max(0.0);
        }
        let mut with_v = marginal.to_vec();
        for &i in rest {
            with_v[i] += 2.0 * self.m[[i, v]];
        }

        let one_first = marginal[v] + positive[v] > 0.0;
        for take in [one_first, !one_first] {
            if take {
                self.x[v] = true;
                self.descend(depth + 1, fixed + marginal[v], &with_v, &next_positive);
                self.x[v] = false;
            } else {
                self.descend(depth + 1, fixed, marginal, &next_positive);
            }
        }
    }
}

/// Single-flip hill climb from all zeros; seeds the incumbent.
fn greedy_start(m: &Array2<f64>) -> (Vec<bool>, f64) {
    let k = m.nrows();
    let mut x = vec![false; k];
    let mut field = vec![0.0; k];
    loop {
        let mut best_gain = 0.0;
        let mut pick = None;
        for i in 0..k {
            let gain = if x[i] { -1.0 } else { 1.0 } * (m[[i, i]] + 2.0 * field[i]);
            if gain > best_gain {
                best_gain = gain;
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        let sign = if x[i] { -1.0 } else { 1.0 };
        x[i] = !x[i];
        for j in 0..k {
            if j != i {
                field[j] += sign * m[[j, i]];
            }
        }
    }
    let value = evaluate(m, &x);
    if value > 0.0 {
        (x, value)
    } else {
        (vec![false; k], 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{random_integer, random_symmetric};
    use super::super::{solve_exhaustive, SolverKind};
    use super::*;
    use ndarray::array;
    use std::time::Duration;

    fn cfg() -> SolverConfig {
        SolverConfig { kind: SolverKind::BranchAndBound, time_budget: Duration::from_secs(1), ..Default::default() }
    }

    fn bnb(q: Array2<f64>) -> QuboSolution {
        solve_branch_and_bound(&QuboProblem::maximize(q).unwrap(), &cfg())
    }

    #[test]
    fn trivial_problems() {
        let s = bnb(Array2::zeros((0, 0)));
        assert!(s.assignment.is_empty() && s.optimal);
        assert_eq!(s.objective, 0.0);
        let s = bnb(Array2::zeros((7, 7)));
        assert_eq!(s.assignment, vec![false; 7]);
        assert_eq!(s.objective, 0.0);
        let s = bnb(array![[0.9, -0.5], [-0.5, 0.8]]);
        assert_eq!(s.assignment, vec![true, false]);
    }

    #[test]
    fn matches_exhaustive_on_random_instances() {
        for seed in 0..200 {
            let n = 2 + seed as usize % 15;
            let density = if seed % 2 == 0 { 1.0 } else { 0.25 };
            let q = random_symmetric(n, density, seed);
            let p = QuboProblem::maximize(q).unwrap();
            let exact = solve_exhaustive(&p).unwrap();
            let s = solve_branch_and_bound(&p, &cfg());
            assert!(s.optimal);
            assert_eq!(s.objective, exact.objective, "seed {seed}");
            assert_eq!(s.assignment, exact.assignment, "seed {seed}");
        }
    }

    #[test]
    fn tie_breaking_matches_exhaustive_on_integer_instances() {
        for seed in 0..60 {
            let n = 2 + seed as usize % 11;
            let p = QuboProblem::maximize(random_integer(n, seed)).unwrap();
            let exact = solve_exhaustive(&p).unwrap();
            let s = solve_branch_and_bound(&p, &cfg());
            assert_eq!(s.assignment, exact.assignment, "seed {seed}");
        }
    }

    #[test]
    fn suppression_shaped_problem_with_many_variables() {
        // 60 boxes in 20 independent triples; each triple keeps one
        let n = 60;
        let mut q = Array2::zeros((n, n));
        for t in 0..20 {
            for a in 0..3 {
                q[[3 * t + a, 3 * t + a]] = 0.4 * (0.9 - 0.1 * a as f64);
                for b in 0..3 {
                    if a != b {
                        q[[3 * t + a, 3 * t + b]] = -0.5;
                    }
                }
            }
        }
        let s = bnb(q);
        assert!(s.optimal);
        assert_eq!(s.selected().count(), 20);
        assert!(s.selected().all(|i| i % 3 == 0));
    }

    #[test]
    fn sparse_large_components_use_elimination() {
        // 30-variable ring where any adjacent pair costs more than it gains:
        // the odd-indexed alternating set has the larger diagonal sum
        let n = 30;
        let mut q = Array2::zeros((n, n));
        for i in 0..n {
            q[[i, i]] = 0.5 + 0.01 * i as f64;
            let j = (i + 1) % n;
            q[[i, j]] = -0.4;
            q[[j, i]] = -0.4;
        }
        let s = bnb(q.clone());
        assert!(s.optimal);
        // a ring of even length keeps alternate variables
        assert_eq!(s.selected().count(), 15);
        assert!((0..n).all(|i| !(s.assignment[i] && s.assignment[(i + 1) % n])));
        assert!(s.assignment[n - 1]);
    }

    #[test]
    fn timeout_returns_incumbent() {
        let q = random_symmetric(120, 1.0, 5);
        let p = QuboProblem::maximize(q).unwrap();
        let cfg = SolverConfig { time_budget: Duration::from_millis(20), ..cfg() };
        let s = solve_branch_and_bound(&p, &cfg);
        assert!(!s.optimal);
        assert!(s.objective >= 0.0);
        assert_eq!(s.objective, p.objective(&s.assignment));
    }

    #[test]
    fn components_split_on_zero_couplings() {
        let q = array![[1.0, 0.0, 0.5], [0.0, 1.0, 0.0], [0.5, 0.0, 1.0]];
        assert_eq!(components(&q), vec![vec![0, 2], vec![1]]);
    }
}

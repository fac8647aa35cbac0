//! Binary quadratic optimization behind one interface.
//!
//! Three classical backends are provided: exhaustive enumeration (the
//! verification oracle), a depth-first branch-and-bound exact solver with a
//! time budget, and seeded simulated annealing. A quantum backend slot is
//! reserved in [`SolverKind`]; selecting it reports that no implementation
//! is available rather than producing a result.
//!
//! Exhaustive search, and branch-and-bound on components of up to 24
//! variables, break ties towards the lexicographically smallest assignment,
//! so their outputs are comparable bit for bit. Larger sparse components are
//! handled by bucket elimination, which is exact but resolves ties by its
//! own fixed rule.

mod anneal;
mod branch_bound;
mod elimination;
mod exhaustive;

use std::time::Duration;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use anneal::{solve_annealing, AnnealingSchedule};
pub use branch_bound::solve_branch_and_bound;
pub use exhaustive::{solve_exhaustive, EXHAUSTIVE_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    #[default]
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    q: Array2<f64>,
    sense: Sense,
}

impl QuboProblem {
    pub fn new(q: Array2<f64>, sense: Sense) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(Error::Dimension { what: "QUBO matrix columns", expected: n, actual: q.ncols() });
        }
        for i in 0..n {
            for j in i + 1..n {
                if (q[[i, j]] - q[[j, i]]).abs() > 1e-12 {
                    return Err(Error::Asymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { q, sense })
    }

    pub fn maximize(q: Array2<f64>) -> Result<Self> {
        Self::new(q, Sense::Maximize)
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// `xᵀ Q x` in a fixed summation order, so that every solver reports
    /// bit-identical objectives for the same assignment.
    pub fn objective(&self, x: &[bool]) -> f64 {
        evaluate(&self.q, x)
    }

    /// The matrix whose maximization is equivalent to this problem.
    pub(crate) fn as_maximization(&self) -> Array2<f64> {
        match self.sense {
            Sense::Maximize => self.q.clone(),
            Sense::Minimize => self.q.mapv(|v| -v),
        }
    }
}

pub(crate) fn evaluate(q: &Array2<f64>, x: &[bool]) -> f64 {
    let mut total = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        if !xi {
            continue;
        }
        for (j, &xj) in x.iter().enumerate() {
            if xj {
                total += q[[i, j]];
            }
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboSolution {
    pub assignment: Vec<bool>,
    pub objective: f64,
    /// Only set by exhaustive search or a completed branch-and-bound.
    pub optimal: bool,
    #[serde(with = "duration_secs")]
    pub solve_time: Duration,
}

impl QuboSolution {
    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignment.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i)
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exhaustive,
    BranchAndBound,
    Annealing,
    /// Reserved for a circuit- or annealer-based quantum backend. Not
    /// implemented; solving with it returns [`Error::BackendUnavailable`].
    Quantum { backend: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub time_budget: Duration,
    pub seed: u64,
    pub schedule: AnnealingSchedule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::BranchAndBound,
            time_budget: Duration::from_secs(60),
            seed: 0,
            schedule: AnnealingSchedule::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.time_budget.is_zero() {
            return Err(Error::Config("solver time budget must be positive".into()));
        }
        self.schedule.validate()
    }
}

/// A backend able to solve [`QuboProblem`]s.
pub trait QuboSolver {
    fn solve(&self, problem: &QuboProblem) -> Result<QuboSolution>;
}

impl QuboSolver for SolverConfig {
    fn solve(&self, problem: &QuboProblem) -> Result<QuboSolution> {
        self.validate()?;
        match &self.kind {
            SolverKind::Exhaustive => solve_exhaustive(problem),
            SolverKind::BranchAndBound => Ok(solve_branch_and_bound(problem, self)),
            SolverKind::Annealing => Ok(solve_annealing(problem, self)),
            SolverKind::Quantum { backend } => Err(Error::BackendUnavailable(backend.clone())),
        }
    }
}

/// Lexicographic order on assignments with `false < true`.
pub(crate) fn lex_less(a: &[bool], b: &[bool]) -> bool {
    a < b
}

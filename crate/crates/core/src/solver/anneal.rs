use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, QuboProblem, QuboSolution, SolverConfig};
use crate::error::{Error, Result};

/// Geometric cooling schedule. Temperatures are relative to the largest
/// absolute matrix entry of the problem being solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealingSchedule {
    pub initial_temperature: f64,
    pub final_temperature: f64,
    pub sweeps: usize,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        Self { initial_temperature: 2.0, final_temperature: 0.01, sweeps: 10_000 }
    }
}

impl AnnealingSchedule {
    pub fn validate(&self) -> Result<()> {
        let (t0, t1) = (self.initial_temperature, self.final_temperature);
        if !(t0 > 0.0 && t1 > 0.0 && t1 <= t0) {
            return Err(Error::Config(format!("annealing temperatures must satisfy 0 < final <= initial, got {t0} -> {t1}")));
        }
        if self.sweeps == 0 {
            return Err(Error::Config("annealing needs at least one sweep".into()));
        }
        Ok(())
    }
}

/// Single-spin-flip Metropolis annealing, deterministic for a given seed.
///
/// Returns the best assignment visited, or all zeros if nothing visited
/// beats it. Never claims optimality.
pub fn solve_annealing(problem: &QuboProblem, cfg: &SolverConfig) -> QuboSolution {
    let start = Instant::now();
    let m = problem.as_maximization();
    let n = m.nrows();
    let schedule = cfg.schedule;
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

    let mut best_x = vec![false; n];
    if n > 0 && scale > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut x: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let mut field: Vec<f64> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && x[j]).map(|j| m[[i, j]]).sum())
            .collect();
        let mut current = evaluate(&m, &x);
        let mut best = 0.0;
        if current > best {
            best = current;
            best_x.copy_from_slice(&x);
        }

        let t0 = schedule.initial_temperature * scale;
        let t1 = schedule.final_temperature * scale;
        let ratio = if schedule.sweeps > 1 {
            (t1 / t0).powf(1.0 / (schedule.sweeps - 1) as f64)
        } else {
            1.0
        };
        let mut temperature = t0;
        for _ in 0..schedule.sweeps {
            for i in 0..n {
                let sign = if x[i] { -1.0 } else { 1.0 };
                let delta = sign * (m[[i, i]] + 2.0 * field[i]);
                let u: f64 = rng.gen();
                if delta >= 0.0 || u < (delta / temperature).exp() {
                    x[i] = !x[i];
                    current += delta;
                    for j in 0..n {
                        if j != i {
                            field[j] += sign * m[[j, i]];
                        }
                    }
                    if current > best {
                        best = current;
                        best_x.copy_from_slice(&x);
                    }
                }
            }
            temperature *= ratio;
        }
        if evaluate(&m, &best_x) <= 0.0 {
            best_x.fill(false);
        }
    }

    QuboSolution {
        objective: problem.objective(&best_x),
        assignment: best_x,
        optimal: false,
        solve_time: start.elapsed(),
    }
}

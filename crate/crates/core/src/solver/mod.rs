//! Exact and heuristic solvers for [`SparsificationProblem`]s.

mod bnb;
mod exhaustive;
mod lp_format;
mod model;
mod relax;
mod rounding;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use exhaustive::{solve_exhaustive, MAX_EXHAUSTIVE};
pub use lp_format::{export_lp, lp_string};
pub use model::{CoverState, LinearModel};
pub use relax::{relax, RelaxOptions, RelaxResult, WarmStart};

use crate::error::{Error, Result};
use crate::problem::{Solution, SolveStatus, SparsificationProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveLimits {
    pub time_limit: Option<Duration>,
    /// Stop once the relative gap is at most this. Zero means solve to optimality.
    pub gap_limit: f64,
    pub node_limit: Option<usize>,
    pub workers: usize,
    pub lp_tolerance: f64,
    pub lp_max_iters: usize,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits {
            time_limit: None,
            gap_limit: 0.0,
            node_limit: None,
            workers: 1,
            lp_tolerance: 1e-7,
            lp_max_iters: 200_000,
        }
    }
}

impl SolveLimits {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.gap_limit >= 0.0) {
            return Err(Error::Config("gap limit must be non-negative".into()));
        }
        if !(self.lp_tolerance > 0.0) {
            return Err(Error::Config("lp tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Fractional optimum of the relaxation with a valid lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    pub x_frac: Vec<f64>,
    pub bound: f64,
    pub primal_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn solve_lp_relaxation(problem: &SparsificationProblem) -> Result<RelaxedSolution> {
    solve_lp_relaxation_with(problem, &SolveLimits::default())
}

pub fn solve_lp_relaxation_with(
    problem: &SparsificationProblem,
    limits: &SolveLimits,
) -> Result<RelaxedSolution> {
    problem.validate()?;
    let model = LinearModel::new(problem);
    relax_model(&model, limits, Instant::now())
}

fn relax_model(model: &LinearModel, limits: &SolveLimits, start: Instant) -> Result<RelaxedSolution> {
    let n = model.n_cols();
    let opts = RelaxOptions {
        tolerance: limits.lp_tolerance,
        max_iters: limits.lp_max_iters,
        deadline: limits.time_limit.map(|t| start + t),
    };
    let res = relax(model, &vec![0.0; n], &vec![1.0; n], None, &opts);
    if !res.bound.is_finite() || res.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            iterations: res.iterations,
            message: "relaxation produced non-finite values".into(),
        });
    }
    Ok(RelaxedSolution {
        x_frac: res.x,
        bound: res.bound,
        primal_value: res.primal_value,
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// Greedy rounding of a fractional point. The result carries the relaxation bound.
pub fn round_relaxation(problem: &SparsificationProblem, relaxed: &RelaxedSolution) -> Solution {
    let model = LinearModel::new(problem);
    rounding::round_with_model(problem, &model, &relaxed.x_frac, relaxed.bound)
}

/// Relaxation followed by rounding; no branching.
pub fn solve_heuristic(problem: &SparsificationProblem, limits: &SolveLimits) -> Result<Solution> {
    problem.validate()?;
    limits.validate()?;
    let model = LinearModel::new(problem);
    let relaxed = relax_model(&model, limits, Instant::now())?;
    let mut s = rounding::round_with_model(problem, &model, &relaxed.x_frac, relaxed.bound);
    // the empty selection is always available
    let empty = problem.empty_selection_value();
    if empty < s.objective {
        s = Solution::new(vec![false; problem.n_landmarks()], empty, relaxed.bound, SolveStatus::Heuristic, 0);
    }
    s.nodes = 1;
    Ok(s)
}

/// Branch-and-bound. Returns [`SolveStatus::Optimal`] only when the tree is exhausted.
pub fn solve_bnb(problem: &SparsificationProblem, limits: &SolveLimits) -> Result<Solution> {
    problem.validate()?;
    limits.validate()?;
    Ok(bnb::solve_bnb(problem, limits, Instant::now()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::tests::three_landmarks;
    use crate::problem::Variant;
    use crate::synth::random_instance;

    #[test]
    fn three_landmark_optimum() {
        let s = solve_bnb(&three_landmarks(), &SolveLimits::default()).unwrap();
        assert_eq!(s.x, vec![false, true, false]);
        assert_eq!(s.objective, 1.0);
        assert_eq!(s.status, SolveStatus::Optimal);
    }

    #[test]
    fn relaxation_bound_is_below_optimum() {
        for seed in 0..10 {
            let p = random_instance(seed, 10, 6, Variant::Ours2D);
            let r = solve_lp_relaxation(&p).unwrap();
            let opt = solve_exhaustive(&p).unwrap().objective;
            assert!(r.bound <= opt + 1e-9, "seed {seed}: {} > {opt}", r.bound);
            assert!(r.converged);
        }
    }

    #[test]
    fn bnb_matches_exhaustive() {
        for seed in 0..40 {
            let v = Variant::ALL[seed as usize % 4];
            let p = random_instance(seed, 12, 6, v);
            let a = solve_bnb(&p, &SolveLimits::default()).unwrap();
            let b = solve_exhaustive(&p).unwrap();
            assert_eq!(a.status, SolveStatus::Optimal);
            assert!((a.objective - b.objective).abs() <= 1e-9, "seed {seed} {v}: {} vs {}", a.objective, b.objective);
        }
    }

    #[test]
    fn parallel_workers_agree() {
        for seed in 0..10 {
            let p = random_instance(seed, 14, 8, Variant::Ours3D);
            let one = solve_bnb(&p, &SolveLimits::default()).unwrap();
            let four = solve_bnb(&p, &SolveLimits { workers: 4, ..Default::default() }).unwrap();
            assert!((one.objective - four.objective).abs() <= 1e-9);
        }
    }

    #[test]
    fn node_limit_reports_status() {
        let p = random_instance(5, 20, 10, Variant::Ours2D);
        let s = solve_bnb(&p, &SolveLimits { node_limit: Some(1), ..Default::default() }).unwrap();
        assert!(matches!(s.status, SolveStatus::Optimal | SolveStatus::Heuristic));
        assert!(s.bound <= s.objective);
    }

    #[test]
    fn rejects_zero_workers() {
        let r = solve_bnb(&three_landmarks(), &SolveLimits { workers: 0, ..Default::default() });
        assert!(matches!(r, Err(Error::Config(_))));
    }
}

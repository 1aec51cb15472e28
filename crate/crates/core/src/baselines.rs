//! Reference methods: greedy K-cover and the divided-image program.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::Result;
use crate::map::Map;
use crate::problem::{build_problem, MethodParams, Solution, SolveStatus, Variant};
use crate::solver::{solve_bnb, SolveLimits};

/// Repeatedly selects the landmark seen by the most keyframes that still need
/// landmarks (ties: higher match count, then lower id). A keyframe needs
/// `min(K1, observed)` landmarks. The objective is that of the keyframe-only
/// program built from `params` with its variant set to [`Variant::Lp`].
pub fn greedy_kcover(map: &Map, params: &MethodParams) -> Result<Solution> {
    let lp = MethodParams {
        variant: Variant::Lp,
        ..params.clone()
    };
    let problem = build_problem(map, &lp)?;

    let mut deficit: Vec<u32> = (0..map.n_keyframes())
        .map(|i| params.k1.min(map.keyframe_observations(i).len() as u32))
        .collect();
    let score = |deficit: &[u32], j: usize| {
        map.landmark_observations(j)
            .iter()
            .filter(|&&i| deficit[i as usize] > 0)
            .count()
    };
    // scores only decrease, so stale heap entries are re-scored lazily
    let mut heap: BinaryHeap<(usize, u32, Reverse<u64>, usize)> = map
        .landmarks()
        .iter()
        .enumerate()
        .map(|(j, l)| (score(&deficit, j), l.match_count, Reverse(l.id), j))
        .filter(|e| e.0 > 0)
        .collect();
    let mut x = vec![false; map.n_landmarks()];
    while let Some((s, mc, id, j)) = heap.pop() {
        let fresh = score(&deficit, j);
        if fresh == 0 {
            continue;
        }
        if fresh < s {
            heap.push((fresh, mc, id, j));
            continue;
        }
        x[j] = true;
        for &i in map.landmark_observations(j) {
            let d = &mut deficit[i as usize];
            *d = d.saturating_sub(1);
        }
    }
    let objective = problem.objective_value(&x);
    Ok(Solution::new(x, objective, f64::NEG_INFINITY, SolveStatus::Heuristic, 0))
}

#[derive(Debug, Clone, Serialize)]
pub struct DiOutcome {
    #[serde(skip)]
    pub solution: Solution,
    /// Selected landmarks seen by each keyframe, in keyframe order.
    pub selected_per_keyframe: Vec<u32>,
    /// Fraction of keyframes with fewer than `min(K1, observed)` selected landmarks.
    pub short_fraction: f64,
}

/// Solves the divided-image program and reports per-keyframe coverage.
pub fn run_di(map: &Map, params: &MethodParams, limits: &SolveLimits) -> Result<DiOutcome> {
    let di = MethodParams {
        variant: Variant::Di,
        ..params.clone()
    };
    let problem = build_problem(map, &di)?;
    let solution = solve_bnb(&problem, limits)?;
    let selected_per_keyframe = selected_per_keyframe(map, &solution.x);
    let short = selected_per_keyframe
        .iter()
        .enumerate()
        .filter(|&(i, &c)| c < params.k1.min(map.keyframe_observations(i).len() as u32))
        .count();
    Ok(DiOutcome {
        short_fraction: if map.n_keyframes() == 0 {
            0.0
        } else {
            short as f64 / map.n_keyframes() as f64
        },
        selected_per_keyframe,
        solution,
    })
}

pub fn selected_per_keyframe(map: &Map, x: &[bool]) -> Vec<u32> {
    (0..map.n_keyframes())
        .map(|i| {
            map.keyframe_observations(i)
                .iter()
                .filter(|&&j| x[j as usize])
                .count() as u32
        })
        .collect()
}

//! Brute-force optimum over all selections. Kept independent of the solver's
//! stacked model so that it can serve as a reference.

use crate::error::{Error, Result};
use crate::problem::{Solution, SolveStatus, SparsificationProblem};

pub const MAX_EXHAUSTIVE: usize = 25;

/// Lexicographic order on selections with `false < true`.
fn lex_less(a: &[bool], b: &[bool]) -> bool {
    a.iter().zip(b).find(|(x, y)| x != y).is_some_and(|(x, _)| !x)
}

pub fn solve_exhaustive(problem: &SparsificationProblem) -> Result<Solution> {
    let n = problem.n_landmarks();
    if n > MAX_EXHAUSTIVE {
        return Err(Error::TooLarge(n));
    }

    // per-column row incidences for every block
    let incidence: Vec<Vec<Vec<u32>>> = problem
        .blocks
        .iter()
        .map(|b| b.matrix.transpose().rows().map(|r| r.to_vec()).collect())
        .collect();
    let mut counts: Vec<Vec<u32>> = problem.blocks.iter().map(|b| vec![0; b.n_rows()]).collect();
    let mut slack: Vec<u64> = problem
        .blocks
        .iter()
        .map(|b| b.rhs.iter().map(|&r| r as u64).sum())
        .collect();

    // selection cost via two half tables so that it never accumulates rounding drift
    let lo_bits = n / 2;
    let hi_bits = n - lo_bits;
    let table = |offset: usize, bits: usize| -> Vec<f64> {
        (0..1usize << bits)
            .map(|m| {
                (0..bits)
                    .filter(|b| m >> b & 1 == 1)
                    .map(|b| problem.weight[offset + b])
                    .sum()
            })
            .collect()
    };
    let lo_table = table(0, lo_bits);
    let hi_table = table(lo_bits, hi_bits);
    let value = |mask: usize, slack: &[u64]| -> f64 {
        let sel = lo_table[mask & ((1 << lo_bits) - 1)] + hi_table[mask >> lo_bits];
        sel + problem
            .blocks
            .iter()
            .zip(slack)
            .map(|(b, &s)| b.penalty * s as f64)
            .sum::<f64>()
    };
    let to_x = |mask: usize| -> Vec<bool> { (0..n).map(|j| mask >> j & 1 == 1).collect() };

    let mut mask = 0usize;
    let mut best_mask = 0usize;
    let mut best = value(0, &slack);
    // Gray-code walk: step i flips the lowest set bit of i
    for step in 1usize..(1usize << n) {
        let j = step.trailing_zeros() as usize;
        let adding = mask >> j & 1 == 0;
        mask ^= 1 << j;
        for (bi, b) in problem.blocks.iter().enumerate() {
            for &r in &incidence[bi][j] {
                let r = r as usize;
                let c = &mut counts[bi][r];
                if adding {
                    if *c < b.rhs[r] {
                        slack[bi] -= 1;
                    }
                    *c += 1;
                } else {
                    *c -= 1;
                    if *c < b.rhs[r] {
                        slack[bi] += 1;
                    }
                }
            }
        }
        let v = value(mask, &slack);
        let tie = (v - best).abs() <= 1e-12 * best.abs().max(1.0);
        if (v < best && !tie) || (tie && lex_less(&to_x(mask), &to_x(best_mask))) {
            best = v;
            best_mask = mask;
        }
    }

    let x = to_x(best_mask);
    let objective = problem.objective_value(&x);
    Ok(Solution::new(x, objective, objective, SolveStatus::Optimal, 1usize << n))
}

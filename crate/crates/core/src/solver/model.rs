//! Stacked constraint rows shared by the relaxation, rounding and branch-and-bound.

use std::collections::HashMap;

use crate::problem::{BlockKind, SparsificationProblem};
use crate::sparse::BinaryMatrix;

/// All constraint rows of a problem in one matrix. Rows with zero penalty or
/// zero rhs are dropped, rows without columns become a constant, and identical
/// rows (same columns and rhs) are merged by adding their penalties.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub weight: Vec<f64>,
    pub rows: BinaryMatrix,
    pub cols: BinaryMatrix,
    pub rhs: Vec<u32>,
    pub penalty: Vec<f64>,
    /// Slack cost that no selection can remove.
    pub offset: f64,
    /// Column counts of the keyframe-level block, used to break branching ties.
    pub priority: Vec<u32>,
    pub merged_rows: usize,
}

impl LinearModel {
    pub fn new(problem: &SparsificationProblem) -> Self {
        let n = problem.n_landmarks();
        let mut rows = BinaryMatrix::empty(n);
        let mut rhs = Vec::new();
        let mut penalty: Vec<f64> = Vec::new();
        let mut offset = 0.0;
        let mut merged_rows = 0;
        let mut seen: HashMap<(Vec<u32>, u32), usize> = HashMap::new();
        for b in &problem.blocks {
            if b.penalty == 0.0 {
                continue;
            }
            for r in 0..b.n_rows() {
                let cols = b.matrix.row(r);
                let k = b.rhs[r];
                if k == 0 {
                    continue;
                }
                if cols.is_empty() {
                    offset += b.penalty * k as f64;
                    continue;
                }
                match seen.get(&(cols.to_vec(), k)) {
                    Some(&i) => {
                        penalty[i] += b.penalty;
                        merged_rows += 1;
                    }
                    None => {
                        seen.insert((cols.to_vec(), k), rhs.len());
                        rows.push_row(cols.iter().copied());
                        rhs.push(k);
                        penalty.push(b.penalty);
                    }
                }
            }
        }
        let cols = rows.transpose();
        let priority = problem
            .blocks
            .iter()
            .find(|b| matches!(b.kind, BlockKind::Keyframe | BlockKind::DividedImage))
            .map(|b| b.matrix.col_counts())
            .unwrap_or_else(|| vec![0; n]);
        LinearModel {
            weight: problem.weight.clone(),
            rows,
            cols,
            rhs,
            penalty,
            offset,
            priority,
            merged_rows,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.weight.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    /// Objective at a binary point.
    pub fn value(&self, x: &[bool]) -> f64 {
        let counts = self.rows.count_selected(x);
        self.value_from_counts(x, &counts)
    }

    fn value_from_counts(&self, x: &[bool], counts: &[u32]) -> f64 {
        let sel: f64 = self.weight.iter().zip(x).filter(|(_, &s)| s).map(|(q, _)| q).sum();
        let slack: f64 = counts
            .iter()
            .zip(&self.rhs)
            .zip(&self.penalty)
            .map(|((&c, &b), &p)| p * b.saturating_sub(c) as f64)
            .sum();
        self.offset + sel + slack
    }
}

/// A binary selection with per-row counts, supporting O(column) marginal updates.
#[derive(Debug, Clone)]
pub struct CoverState<'a> {
    model: &'a LinearModel,
    x: Vec<bool>,
    counts: Vec<u32>,
}

impl<'a> CoverState<'a> {
    pub fn empty(model: &'a LinearModel) -> Self {
        CoverState {
            model,
            x: vec![false; model.n_cols()],
            counts: vec![0; model.n_rows()],
        }
    }

    pub fn from_selection(model: &'a LinearModel, x: &[bool]) -> Self {
        CoverState {
            model,
            x: x.to_vec(),
            counts: model.rows.count_selected(x),
        }
    }

    pub fn x(&self) -> &[bool] {
        &self.x
    }

    pub fn into_selection(self) -> Vec<bool> {
        self.x
    }

    pub fn value(&self) -> f64 {
        self.model.value_from_counts(&self.x, &self.counts)
    }

    /// Objective change from selecting `j`.
    pub fn add_delta(&self, j: usize) -> f64 {
        let saved: f64 = self
            .model
            .cols
            .row(j)
            .iter()
            .filter(|&&r| self.counts[r as usize] < self.model.rhs[r as usize])
            .map(|&r| self.model.penalty[r as usize])
            .sum();
        self.model.weight[j] - saved
    }

    /// Objective change from deselecting `j`.
    pub fn remove_delta(&self, j: usize) -> f64 {
        let lost: f64 = self
            .model
            .cols
            .row(j)
            .iter()
            .filter(|&&r| self.counts[r as usize] <= self.model.rhs[r as usize])
            .map(|&r| self.model.penalty[r as usize])
            .sum();
        lost - self.model.weight[j]
    }

    pub fn add(&mut self, j: usize) {
        debug_assert!(!self.x[j]);
        self.x[j] = true;
        for &r in self.model.cols.row(j) {
            self.counts[r as usize] += 1;
        }
    }

    pub fn remove(&mut self, j: usize) {
        debug_assert!(self.x[j]);
        self.x[j] = false;
        for &r in self.model.cols.row(j) {
            self.counts[r as usize] -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ConstraintBlock, RowLabel, SlackKind, Variant};

    #[test]
    fn merges_duplicates_and_folds_empty_rows() {
        let block = |kind, rows: Vec<Vec<u32>>, rhs: Vec<u32>, penalty| ConstraintBlock {
            kind,
            labels: (0..rows.len()).map(|i| RowLabel::Keyframe(i as u64)).collect(),
            matrix: BinaryMatrix::from_rows(3, rows),
            rhs,
            penalty,
            slack: SlackKind::Integer,
        };
        let p = SparsificationProblem {
            variant: Variant::Ours2D,
            landmark_ids: vec![0, 1, 2],
            weight: vec![0.5, 1.0, 0.25],
            blocks: vec![
                block(BlockKind::Keyframe, vec![vec![0, 1], vec![], vec![2]], vec![2, 3, 0], 1.0),
                block(BlockKind::ImageCell, vec![vec![0, 1], vec![2], vec![0, 1]], vec![2, 1, 2], 0.5),
            ],
        };
        let m = LinearModel::new(&p);
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.penalty, vec![2.0, 0.5]);
        assert_eq!(m.offset, 3.0);
        assert_eq!(m.merged_rows, 2);
        for mask in 0..8u32 {
            let x: Vec<bool> = (0..3).map(|j| mask >> j & 1 == 1).collect();
            assert!((m.value(&x) - p.objective_value(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn deltas_match_recomputation() {
        let p = crate::synth::random_instance(3, 9, 5, Variant::Ours3D);
        let m = LinearModel::new(&p);
        let mut s = CoverState::empty(&m);
        for j in [4, 1, 7, 0] {
            let before = s.value();
            let d = s.add_delta(j);
            s.add(j);
            assert!((s.value() - before - d).abs() < 1e-9);
        }
        let before = s.value();
        let d = s.remove_delta(1);
        s.remove(1);
        assert!((s.value() - before - d).abs() < 1e-9);
        assert!((s.value() - p.objective_value(s.x())).abs() < 1e-9);
    }
}

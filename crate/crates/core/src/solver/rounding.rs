use super::model::{CoverState, LinearModel};
use crate::problem::{Solution, SolveStatus, SparsificationProblem};

/// Landmarks whose relaxed value is at most this are not considered for selection.
const CANDIDATE_MIN: f64 = 1e-6;

/// Rounds a fractional point: scan landmarks by decreasing relaxed value
/// (ties: lower weight, then lower index) adding each one that lowers the
/// objective, then make one pass in reverse order dropping landmarks whose
/// removal lowers it.
pub(crate) fn round_point(model: &LinearModel, x_frac: &[f64]) -> Vec<bool> {
    let n = model.n_cols();
    let mut order: Vec<usize> = (0..n).filter(|&j| x_frac[j] > CANDIDATE_MIN).collect();
    order.sort_by(|&a, &b| {
        x_frac[b]
            .total_cmp(&x_frac[a])
            .then(model.weight[a].total_cmp(&model.weight[b]))
            .then(a.cmp(&b))
    });

    let mut state = CoverState::empty(model);
    for &j in &order {
        let d = state.add_delta(j);
        // landmarks the relaxation selects outright are also kept on exact ties
        if d < 0.0 || (d <= 0.0 && x_frac[j] >= 0.5) {
            state.add(j);
        }
    }
    for &j in order.iter().rev() {
        if state.x()[j] && state.remove_delta(j) < 0.0 {
            state.remove(j);
        }
    }
    state.into_selection()
}

pub(crate) fn round_with_model(
    problem: &SparsificationProblem,
    model: &LinearModel,
    x_frac: &[f64],
    bound: f64,
) -> Solution {
    let x = round_point(model, x_frac);
    let objective = problem.objective_value(&x);
    Solution::new(x, objective, bound, SolveStatus::Heuristic, 0)
}

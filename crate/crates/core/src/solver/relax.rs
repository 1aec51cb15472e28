//! Continuous relaxation by a restarted primal-dual hybrid gradient method.
//!
//! With slacks eliminated, the relaxation is the saddle-point problem
//!
//! ```text
//! min_{lo <= x <= hi}  max_{0 <= y <= penalty}  q'x + y'(b - M x)
//! ```
//!
//! For any `y` in its box, `g(y) = b'y + sum_j min_{x_j} (q - M'y)_j x_j` is a
//! lower bound on the relaxation, and for any `x`, `f(x) = q'x + sum_r
//! penalty_r max(0, b_r - (M x)_r)` is attained by a feasible point. Their
//! difference is a true duality gap, which drives both restarts and
//! termination. Every reported bound is therefore valid even when the
//! iteration stops early.

use std::time::Instant;

use rayon::prelude::*;

use super::model::LinearModel;

/// Above this many nonzeros the matrix-vector products run on the rayon pool.
const PARALLEL_NNZ: usize = 200_000;
const CHECK_EVERY: usize = 64;
/// Initial step size; adapted every iteration.
const STEP: f64 = 0.95;

#[derive(Debug, Clone, Copy)]
pub struct RelaxOptions {
    /// Target relative duality gap.
    pub tolerance: f64,
    pub max_iters: usize,
    pub deadline: Option<Instant>,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            tolerance: 1e-7,
            max_iters: 200_000,
            deadline: None,
        }
    }
}

/// Iterate to resume from.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub omega: f64,
}

#[derive(Debug, Clone)]
pub struct RelaxResult {
    /// Best primal point found (smallest `f`).
    pub x: Vec<f64>,
    pub primal_value: f64,
    /// Best dual value found (largest `g`); a valid lower bound.
    pub bound: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Last iterate, for warm starts.
    pub warm: WarmStart,
}

impl RelaxResult {
    pub fn gap(&self) -> f64 {
        (self.primal_value - self.bound).max(0.0) / self.primal_value.abs().max(1.0)
    }
}

fn mul_rows(m: &LinearModel, x: &[f64], out: &mut [f64]) {
    let rows = &m.rows;
    let body = |(r, o): (usize, &mut f64)| {
        *o = rows.row(r).iter().map(|&c| x[c as usize]).sum();
    };
    if rows.nnz() >= PARALLEL_NNZ {
        out.par_iter_mut().enumerate().with_min_len(256).for_each(body);
    } else {
        out.iter_mut().enumerate().for_each(body);
    }
}

fn mul_cols(m: &LinearModel, y: &[f64], out: &mut [f64]) {
    let cols = &m.cols;
    let body = |(j, o): (usize, &mut f64)| {
        *o = cols.row(j).iter().map(|&r| y[r as usize]).sum();
    };
    if cols.nnz() >= PARALLEL_NNZ {
        out.par_iter_mut().enumerate().with_min_len(256).for_each(body);
    } else {
        out.iter_mut().enumerate().for_each(body);
    }
}

fn primal_value(m: &LinearModel, x: &[f64], mx: &[f64]) -> f64 {
    let sel: f64 = m.weight.iter().zip(x).map(|(q, v)| q * v).sum();
    let slack: f64 = mx
        .iter()
        .zip(&m.rhs)
        .zip(&m.penalty)
        .map(|((&v, &b), &p)| p * (b as f64 - v).max(0.0))
        .sum();
    m.offset + sel + slack
}

fn dual_value(m: &LinearModel, y: &[f64], mty: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let by: f64 = y.iter().zip(&m.rhs).map(|(v, &b)| v * b as f64).sum();
    let inner: f64 = (0..m.n_cols())
        .map(|j| {
            let c = m.weight[j] - mty[j];
            if c >= 0.0 {
                c * lo[j]
            } else {
                c * hi[j]
            }
        })
        .sum();
    m.offset + by + inner
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Solves the relaxation with per-variable bounds `lo <= x <= hi`.
pub fn relax(
    m: &LinearModel,
    lo: &[f64],
    hi: &[f64],
    warm: Option<&WarmStart>,
    opts: &RelaxOptions,
) -> RelaxResult {
    let n = m.n_cols();
    let rn = m.n_rows();
    let tau: Vec<f64> = (0..n).map(|j| 1.0 / (m.cols.row(j).len().max(1) as f64)).collect();
    let sigma: Vec<f64> = (0..rn).map(|r| 1.0 / (m.rows.row(r).len().max(1) as f64)).collect();

    let (mut x, mut y, mut omega) = match warm {
        Some(w) if w.x.len() == n && w.y.len() == rn => (
            w.x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect::<Vec<_>>(),
            w.y.clone(),
            w.omega,
        ),
        _ => (lo.to_vec(), vec![0.0; rn], 1.0),
    };

    let mut mx = vec![0.0; rn];
    let mut mty = vec![0.0; n];
    mul_rows(m, &x, &mut mx);
    mul_cols(m, &y, &mut mty);

    let mut best_x = x.clone();
    let mut best_f = primal_value(m, &x, &mx);
    let mut best_g = dual_value(m, &y, &mty, lo, hi);

    let done = |f: f64, g: f64| f - g <= opts.tolerance * f.abs().max(1.0);
    if rn == 0 || done(best_f, best_g) {
        return finish(best_x, best_f, best_g, 0, x, y, omega, opts);
    }

    let mut x_new = vec![0.0; n];
    let mut mx_new = vec![0.0; rn];
    let mut x_sum = vec![0.0; n];
    let mut y_sum = vec![0.0; rn];
    let mut avg_len = 0usize;
    let mut x_avg = vec![0.0; n];
    let mut y_avg = vec![0.0; rn];
    let mut mx_avg = vec![0.0; rn];
    let mut mty_avg = vec![0.0; n];

    let mut restart_x = x.clone();
    let mut restart_y = y.clone();
    let mut restart_gap = best_f - best_g;
    let mut prev_candidate_gap = f64::INFINITY;
    let mut since_restart = 0usize;

    let mut y_new = vec![0.0; rn];
    let mut mty_new = vec![0.0; n];
    let mut eta = STEP;
    let mut iter = 0usize;
    while iter < opts.max_iters {
        // adaptive step: shrink until the step satisfies the local stability condition
        loop {
            let pt = eta / omega;
            let dt = eta * omega;
            for j in 0..n {
                let v = x[j] - pt * tau[j] * (m.weight[j] - mty[j]);
                x_new[j] = v.clamp(lo[j], hi[j]);
            }
            mul_rows(m, &x_new, &mut mx_new);
            for r in 0..rn {
                let extrap = 2.0 * mx_new[r] - mx[r];
                let v = y[r] + dt * sigma[r] * (m.rhs[r] as f64 - extrap);
                y_new[r] = v.clamp(0.0, m.penalty[r]);
            }
            mul_cols(m, &y_new, &mut mty_new);

            let dx2: f64 = (0..n).map(|j| (x_new[j] - x[j]).powi(2) / tau[j]).sum();
            let dy2: f64 = (0..rn).map(|r| (y_new[r] - y[r]).powi(2) / sigma[r]).sum();
            let cross: f64 = (0..rn).map(|r| (y_new[r] - y[r]) * (mx_new[r] - mx[r])).sum();
            let limit = if cross.abs() > 0.0 {
                (omega * dx2 + dy2 / omega) / (2.0 * cross.abs())
            } else {
                f64::INFINITY
            };
            let k = (iter + 1) as f64;
            let next = ((1.0 - k.powf(-0.3)) * limit).min((1.0 + k.powf(-0.6)) * eta);
            let accept = eta <= limit;
            eta = next.max(1e-6);
            if accept {
                break;
            }
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut mx, &mut mx_new);
        std::mem::swap(&mut y, &mut y_new);
        std::mem::swap(&mut mty, &mut mty_new);
        for j in 0..n {
            x_sum[j] += x[j];
        }
        for r in 0..rn {
            y_sum[r] += y[r];
        }
        avg_len += 1;
        iter += 1;
        since_restart += 1;

        if iter % CHECK_EVERY != 0 && iter != opts.max_iters {
            continue;
        }

        let inv = 1.0 / avg_len as f64;
        for j in 0..n {
            x_avg[j] = x_sum[j] * inv;
        }
        for r in 0..rn {
            y_avg[r] = y_sum[r] * inv;
        }
        mul_rows(m, &x_avg, &mut mx_avg);
        mul_cols(m, &y_avg, &mut mty_avg);

        let f_cur = primal_value(m, &x, &mx);
        let g_cur = dual_value(m, &y, &mty, lo, hi);
        let f_avg = primal_value(m, &x_avg, &mx_avg);
        let g_avg = dual_value(m, &y_avg, &mty_avg, lo, hi);
        if f_cur < best_f {
            best_f = f_cur;
            best_x.copy_from_slice(&x);
        }
        if f_avg < best_f {
            best_f = f_avg;
            best_x.copy_from_slice(&x_avg);
        }
        best_g = best_g.max(g_cur).max(g_avg);
        if done(best_f, best_g) {
            break;
        }
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }

        let gap_cur = f_cur - g_cur;
        let gap_avg = f_avg - g_avg;
        let use_avg = gap_avg < gap_cur;
        let candidate_gap = gap_cur.min(gap_avg);
        let restart = candidate_gap <= 0.2 * restart_gap
            || (candidate_gap <= 0.8 * restart_gap && candidate_gap > prev_candidate_gap)
            || since_restart as f64 >= 0.36 * iter as f64;
        prev_candidate_gap = candidate_gap;
        if restart {
            if use_avg {
                x.copy_from_slice(&x_avg);
                y.copy_from_slice(&y_avg);
                mx.copy_from_slice(&mx_avg);
                mty.copy_from_slice(&mty_avg);
            }
            let dx = dist(&x, &restart_x);
            let dy = dist(&y, &restart_y);
            if dx > 1e-10 && dy > 1e-10 {
                omega = (0.5 * (dy / dx).ln() + 0.5 * omega.ln()).exp().clamp(1e-4, 1e4);
            }
            restart_x.copy_from_slice(&x);
            restart_y.copy_from_slice(&y);
            restart_gap = candidate_gap;
            prev_candidate_gap = f64::INFINITY;
            x_sum.iter_mut().for_each(|v| *v = 0.0);
            y_sum.iter_mut().for_each(|v| *v = 0.0);
            avg_len = 0;
            since_restart = 0;
        }
    }
    finish(best_x, best_f, best_g, iter, x, y, omega, opts)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    best_x: Vec<f64>,
    best_f: f64,
    best_g: f64,
    iterations: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    omega: f64,
    opts: &RelaxOptions,
) -> RelaxResult {
    let bound = best_g.min(best_f);
    RelaxResult {
        converged: best_f - bound <= opts.tolerance * best_f.abs().max(1.0),
        x: best_x,
        primal_value: best_f,
        bound,
        iterations,
        warm: WarmStart { x, y, omega },
    }
}

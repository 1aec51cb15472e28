//! Best-first branch-and-bound over the relaxation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use super::model::LinearModel;
use super::relax::{relax, RelaxOptions, WarmStart};
use super::rounding::round_point;
use super::SolveLimits;
use crate::problem::{Solution, SolveStatus, SparsificationProblem};

/// Nodes whose bound is within this of the incumbent are pruned.
const PRUNE_TOL: f64 = 1e-9;
/// Relaxed values closer than this to 0 or 1 count as integral.
const INTEGRAL_TOL: f64 = 1e-6;

struct Node {
    bound: f64,
    id: u64,
    fixes: Vec<(u32, bool)>,
    warm: Option<Arc<WarmStart>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: the smallest bound (then the oldest node) comes out first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.id.cmp(&self.id))
    }
}

struct Incumbent {
    value: f64,
    x: Vec<bool>,
}

struct Tree {
    open: BinaryHeap<Node>,
    /// Bounds of nodes currently being processed, by id.
    active: BTreeMap<u64, f64>,
    next_id: u64,
    done: usize,
    stop: Option<SolveStatus>,
    incumbent: Incumbent,
}

impl Tree {
    fn lower_bound(&self) -> f64 {
        let open = self.open.peek().map_or(f64::INFINITY, |n| n.bound);
        self.active.values().copied().fold(open, f64::min)
    }

    fn offer(&mut self, value: f64, x: Vec<bool>, best: &AtomicU64) {
        let inc = &mut self.incumbent;
        if value < inc.value || (value == inc.value && x < inc.x) {
            inc.value = value;
            inc.x = x;
            best.store(value.to_bits(), AtomicOrdering::Release);
        }
    }
}

struct Outcome {
    bound: f64,
    candidate: Option<(f64, Vec<bool>)>,
    children: Vec<(Vec<(u32, bool)>, f64)>,
    warm: Option<Arc<WarmStart>>,
}

struct Search<'a> {
    problem: &'a SparsificationProblem,
    model: LinearModel,
    limits: &'a SolveLimits,
    deadline: Option<Instant>,
    best: AtomicU64,
}

fn prunable(bound: f64, incumbent: f64) -> bool {
    bound >= incumbent - PRUNE_TOL
}

impl Search<'_> {
    fn incumbent_value(&self) -> f64 {
        f64::from_bits(self.best.load(AtomicOrdering::Acquire))
    }

    fn process(&self, node: &Node) -> Outcome {
        let n = self.model.n_cols();
        let mut lo = vec![0.0; n];
        let mut hi = vec![1.0; n];
        for &(j, v) in &node.fixes {
            let v = if v { 1.0 } else { 0.0 };
            lo[j as usize] = v;
            hi[j as usize] = v;
        }
        let opts = RelaxOptions {
            tolerance: self.limits.lp_tolerance,
            max_iters: self.limits.lp_max_iters,
            deadline: self.deadline,
        };
        let res = relax(&self.model, &lo, &hi, node.warm.as_deref(), &opts);
        let bound = res.bound.max(node.bound);

        let mut x = round_point(&self.model, &res.x);
        for &(j, v) in &node.fixes {
            x[j as usize] = v;
        }
        let value = self.problem.objective_value(&x);
        let incumbent = self.incumbent_value().min(value);
        let candidate = Some((value, x));
        let warm = Some(Arc::new(res.warm));

        if prunable(bound, incumbent) {
            return Outcome { bound, candidate, children: vec![], warm };
        }

        let free = |j: usize| lo[j] < hi[j];
        let mut branch: Option<(usize, f64)> = None;
        for j in (0..n).filter(|&j| free(j)) {
            let f = res.x[j].min(1.0 - res.x[j]);
            if f <= INTEGRAL_TOL {
                continue;
            }
            let better = match branch {
                None => true,
                Some((b, bf)) => {
                    f > bf + 1e-12
                        || (f >= bf - 1e-12 && self.model.priority[j] > self.model.priority[b])
                }
            };
            if better {
                branch = Some((j, f));
            }
        }
        // An integral relaxation whose rounding did not close the node still
        // leaves the node open; split on the most constrained free column.
        let var = branch.map(|(j, _)| j).or_else(|| {
            (0..n)
                .filter(|&j| free(j))
                .max_by(|&a, &b| self.model.priority[a].cmp(&self.model.priority[b]).then(b.cmp(&a)))
        });
        let children = match var {
            Some(j) => [true, false]
                .into_iter()
                .map(|v| {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j as u32, v));
                    (fixes, bound)
                })
                .collect(),
            None => vec![],
        };
        Outcome { bound, candidate, children, warm }
    }
}

pub(crate) fn solve_bnb(
    problem: &SparsificationProblem,
    limits: &SolveLimits,
    start: Instant,
) -> Solution {
    let model = LinearModel::new(problem);
    let deadline = limits.time_limit.map(|t| start + t);
    let search = Search {
        problem,
        model,
        limits,
        deadline,
        best: AtomicU64::new(f64::INFINITY.to_bits()),
    };

    let root = Node {
        bound: f64::NEG_INFINITY,
        id: 0,
        fixes: vec![],
        warm: None,
    };
    let mut tree = Tree {
        open: BinaryHeap::new(),
        active: BTreeMap::new(),
        next_id: 1,
        done: 0,
        stop: None,
        incumbent: Incumbent {
            value: f64::INFINITY,
            x: vec![false; problem.n_landmarks()],
        },
    };
    tree.offer(problem.empty_selection_value(), vec![false; problem.n_landmarks()], &search.best);
    let out = search.process(&root);
    integrate(&mut tree, &search, out);

    let shared = (Mutex::new(tree), Condvar::new());
    let workers = limits.workers.max(1);
    if workers == 1 {
        worker(&search, &shared);
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| worker(&search, &shared));
            }
        });
    }

    let tree = shared.0.into_inner().unwrap_or_else(|e| e.into_inner());
    let lower = tree.lower_bound();
    let incumbent = tree.incumbent;
    let (status, bound) = match tree.stop {
        None => (SolveStatus::Optimal, incumbent.value),
        Some(s) => {
            // only the root was solved: this is the rounding heuristic
            let s = if tree.done <= 1 { SolveStatus::Heuristic } else { s };
            (s, lower.min(incumbent.value))
        }
    };
    let objective = problem.objective_value(&incumbent.x);
    Solution::new(incumbent.x, objective, bound, status, tree.done)
}

fn integrate(tree: &mut Tree, search: &Search, out: Outcome) {
    if let Some((v, x)) = out.candidate {
        tree.offer(v, x, &search.best);
    }
    if !prunable(out.bound, tree.incumbent.value) {
        for (fixes, bound) in out.children {
            let id = tree.next_id;
            tree.next_id += 1;
            tree.open.push(Node {
                bound,
                id,
                fixes,
                warm: out.warm.clone(),
            });
        }
    }
    tree.done += 1;
    check_limits(tree, search);
}

fn check_limits(tree: &mut Tree, search: &Search) {
    if tree.stop.is_some() || (tree.open.is_empty() && tree.active.is_empty()) {
        return;
    }
    let limits = search.limits;
    if search.deadline.is_some_and(|d| Instant::now() >= d) {
        tree.stop = Some(SolveStatus::TimeLimit);
    } else if limits.node_limit.is_some_and(|l| tree.done >= l) {
        tree.stop = Some(SolveStatus::NodeLimit);
    } else if limits.gap_limit > 0.0 {
        let gap = crate::problem::relative_gap(tree.incumbent.value, tree.lower_bound());
        if gap <= limits.gap_limit {
            tree.stop = Some(SolveStatus::GapLimit);
        }
    }
}

fn worker(search: &Search, shared: &(Mutex<Tree>, Condvar)) {
    let (lock, cv) = shared;
    loop {
        let node = {
            let mut tree = lock.lock().unwrap();
            loop {
                if tree.stop.is_some() {
                    return;
                }
                if let Some(node) = tree.open.pop() {
                    if prunable(node.bound, tree.incumbent.value) {
                        continue;
                    }
                    tree.active.insert(node.id, node.bound);
                    break node;
                }
                if tree.active.is_empty() {
                    cv.notify_all();
                    return;
                }
                tree = cv.wait(tree).unwrap();
            }
        };
        let out = search.process(&node);
        let mut tree = lock.lock().unwrap();
        tree.active.remove(&node.id);
        integrate(&mut tree, search, out);
        cv.notify_all();
    }
}

use gridsparse::problem::{SlackKind, SparsificationProblem};
use gridsparse::solver::{round_relaxation, solve_lp_relaxation};
use gridsparse::synth::random_instance;
use gridsparse::{solve_bnb, solve_exhaustive, SolveLimits, SolveStatus, Variant};
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relaxation optimum with explicit continuous slacks, solved by simplex.
fn simplex_relaxation(p: &SparsificationProblem) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let x: Vec<_> = p.weight.iter().map(|&q| lp.add_var(q, (0.0, 1.0))).collect();
    for b in &p.blocks {
        let ub = |r: f64| if b.slack == SlackKind::Binary { 1.0 } else { r };
        for r in 0..b.n_rows() {
            let rhs = b.rhs[r] as f64;
            let s = lp.add_var(b.penalty, (0.0, ub(rhs)));
            let mut terms: Vec<_> = b.matrix.row(r).iter().map(|&j| (x[j as usize], 1.0)).collect();
            terms.push((s, 1.0));
            lp.add_constraint(&terms, ComparisonOp::Ge, rhs);
        }
    }
    lp.solve().unwrap().into_solution().unwrap().objective()
}

#[test]
fn relaxation_matches_simplex() {
    for seed in 0..60 {
        let v = Variant::ALL[seed as usize % 4];
        let n = 5 + seed as usize % 30;
        let p = random_instance(seed, n, 3 + seed as usize % 8, v);
        let want = simplex_relaxation(&p);
        let got = solve_lp_relaxation(&p).unwrap();
        let tol = 1e-6 * want.abs().max(1.0);
        assert!(got.bound <= want + 1e-9, "seed {seed}: bound {} above optimum {want}", got.bound);
        assert!(want - got.bound <= tol, "seed {seed}: bound {} vs {want}", got.bound);
        assert!(got.primal_value - want <= tol, "seed {seed}: primal {} vs {want}", got.primal_value);
        assert!(got.x_frac.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn bound_below_every_binary_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..20 {
        let p = random_instance(seed, 15, 6, Variant::ALL[seed as usize % 4]);
        let r = solve_lp_relaxation(&p).unwrap();
        for _ in 0..100 {
            let x: Vec<bool> = (0..15).map(|_| rng.gen()).collect();
            assert!(r.bound <= p.objective_value(&x) + 1e-9);
        }
    }
}

#[test]
fn bnb_equals_exhaustive_on_small_instances() {
    for seed in 0..200u64 {
        let v = Variant::ALL[seed as usize % 4];
        let n = 4 + seed as usize % 9;
        let m = 1 + seed as usize % 6;
        let p = random_instance(1000 + seed, n, m, v);
        let b = solve_bnb(&p, &SolveLimits::default()).unwrap();
        let e = solve_exhaustive(&p).unwrap();
        assert_eq!(b.status, SolveStatus::Optimal);
        assert!((b.objective - e.objective).abs() <= 1e-9, "seed {seed}");
        assert!(b.bound <= b.objective);
    }
}

#[test]
fn rounding_is_usually_near_optimal() {
    let mut close = 0;
    for seed in 0..200u64 {
        let p = random_instance(5000 + seed, 4 + seed as usize % 9, 1 + seed as usize % 6, Variant::ALL[seed as usize % 4]);
        let r = solve_lp_relaxation(&p).unwrap();
        let h = round_relaxation(&p, &r);
        let opt = solve_exhaustive(&p).unwrap().objective;
        assert!(h.objective >= r.bound - 1e-9);
        if h.objective <= opt * 1.05 + 1e-12 {
            close += 1;
        }
    }
    assert!(close >= 180, "only {close}/200 within 5%");
}

#[test]
fn rounding_keeps_integral_points_and_zero() {
    let p = random_instance(4, 10, 5, Variant::Ours2D);
    let r = solve_lp_relaxation(&p).unwrap();
    let zero = gridsparse::solver::RelaxedSolution { x_frac: vec![0.0; 10], ..r.clone() };
    assert!(round_relaxation(&p, &zero).x.iter().all(|&s| !s));
    let opt = solve_exhaustive(&p).unwrap();
    let integral = gridsparse::solver::RelaxedSolution {
        x_frac: opt.x.iter().map(|&s| s as u8 as f64).collect(),
        ..r
    };
    assert_eq!(round_relaxation(&p, &integral).x, opt.x);
}

#[test]
fn vacuous_constraints_select_nothing() {
    for v in Variant::ALL {
        let mut p = random_instance(8, 9, 4, v);
        for b in &mut p.blocks {
            match b.kind {
                gridsparse::problem::BlockKind::Keyframe | gridsparse::problem::BlockKind::DividedImage => {
                    b.rhs.iter_mut().for_each(|r| *r = 0)
                }
                _ => b.penalty = 0.0,
            }
        }
        let s = solve_bnb(&p, &SolveLimits::default()).unwrap();
        assert!(s.x.iter().all(|&x| !x));
        assert_eq!(s.objective, 0.0);
    }
}

//! Landmark map sparsification.
//!
//! A map (keyframes, landmarks, observations) is reduced to a subset of
//! landmarks by solving a binary program that keeps every keyframe covered,
//! spreads landmarks over image cells (`ours2d`) and over the space from which
//! the map can be re-localized (`ours3d`). See the crate README for the file
//! formats and the command-line tool.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod grid2d;
pub mod map;
pub mod problem;
pub mod solver;
pub mod sparse;
pub mod synth;
pub mod visibility;

pub use error::{Error, Result};
pub use eval::{EvalReport, Evaluator, QueryLabel, QueryView};
pub use geometry::{CameraModel, Pixel, Point3, Pose};
pub use grid2d::Grid2DConfig;
pub use map::{load_map, parse_map, save_map, Map};
pub use problem::{
    build_problem, check_solution, MethodParams, Solution, SolveStatus, SparsificationProblem,
    Variant,
};
pub use solver::{solve_bnb, solve_exhaustive, solve_heuristic, solve_lp_relaxation, SolveLimits};
pub use sparse::BinaryMatrix;
pub use synth::{generate_map, generate_queries, SceneSpec};
pub use visibility::{Bounds, Grid3DConfig, VisibilityMargins, VisibilityRegion};

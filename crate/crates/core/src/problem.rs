//! Assembly of the selection programs and slack-eliminated objective evaluation.
//!
//! Every variant minimizes `q'x + sum_b penalty_b * sum_r slack_r` over binary
//! `x`, where each constraint block asks `(M_b x)_r + slack_r >= rhs_r`. For a
//! fixed `x` the best slack is `max(0, rhs_r - (M_b x)_r)`, so slacks are never
//! stored; they are implied by `x`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid2d::{occupancy_matrix, Grid2DConfig};
use crate::map::Map;
use crate::sparse::BinaryMatrix;
use crate::visibility::{
    fit_all, valid_cells, Bounds, Grid3DConfig, ValidCells, VisibilityMargins, VisibilityRegion,
    DEFAULT_CELL_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Keyframe coverage only.
    Lp,
    /// Keyframe coverage plus image-cell occupancy.
    Ours2D,
    /// Ours2D plus coverage of valid 3D cells.
    Ours3D,
    /// Divided-image coverage: every occupied cell needs ceil(K1 / cells) landmarks.
    Di,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Lp, Variant::Ours2D, Variant::Ours3D, Variant::Di];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Lp => "lp",
            Variant::Ours2D => "ours2d",
            Variant::Ours3D => "ours3d",
            Variant::Di => "di",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lp" => Ok(Variant::Lp),
            "ours2d" => Ok(Variant::Ours2D),
            "ours3d" => Ok(Variant::Ours3D),
            "di" => Ok(Variant::Di),
            _ => Err(Error::Config(format!(
                "unknown method `{s}` (expected lp, ours2d, ours3d or di)"
            ))),
        }
    }
}

/// How the per-landmark selection cost is derived from match counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// `1 / (1 + match_count)`, rescaled so the largest weight is 1.
    #[default]
    InverseMatch,
    Uniform,
}

impl FromStr for WeightScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse-match" => Ok(WeightScheme::InverseMatch),
            "uniform" => Ok(WeightScheme::Uniform),
            _ => Err(Error::Config(format!(
                "unknown weight scheme `{s}` (expected inverse-match or uniform)"
            ))),
        }
    }
}

/// 3D grid settings used by the Ours3D variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3DParams {
    pub resolution: f64,
    pub bounds: Bounds,
    pub cell_cap: u64,
}

impl Grid3DParams {
    pub fn new(resolution: f64) -> Self {
        Grid3DParams {
            resolution,
            bounds: Bounds::Auto,
            cell_cap: DEFAULT_CELL_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub variant: Variant,
    pub k1: u32,
    pub k2: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub grid2d: Grid2DConfig,
    pub grid3d: Option<Grid3DParams>,
    pub weight_scheme: WeightScheme,
    pub margins: VisibilityMargins,
}

pub const DEFAULT_K1: u32 = 50;
pub const DEFAULT_K2: u32 = 30;
pub const DEFAULT_DI_LAMBDA1: f64 = 0.02;

impl MethodParams {
    /// Defaults for a variant. DI uses a small keyframe penalty.
    pub fn new(variant: Variant) -> Self {
        MethodParams {
            variant,
            k1: DEFAULT_K1,
            k2: DEFAULT_K2,
            lambda1: if variant == Variant::Di {
                DEFAULT_DI_LAMBDA1
            } else {
                1.0
            },
            lambda2: 0.1,
            lambda3: 0.5,
            grid2d: Grid2DConfig::default(),
            grid3d: None,
            weight_scheme: WeightScheme::default(),
            margins: VisibilityMargins::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if self.variant == Variant::Ours3D {
            if self.grid3d.is_none() {
                return Err(Error::Config(
                    "the ours3d method needs a 3D grid resolution".into(),
                ));
            }
            if self.k2 == 0 {
                return Err(Error::Config("k2 must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    Keyframe,
    ImageCell,
    SpaceCell,
    DividedImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlackKind {
    /// Integer slack in `0..=rhs`.
    Integer,
    /// 0/1 slack; only used with `rhs = 1`.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowLabel {
    Keyframe(u64),
    Cell { keyframe_id: u64, col: u32, row: u32 },
    Voxel([u32; 3]),
}

#[derive(Debug, Clone)]
pub struct ConstraintBlock {
    pub kind: BlockKind,
    pub matrix: BinaryMatrix,
    pub rhs: Vec<u32>,
    pub penalty: f64,
    pub slack: SlackKind,
    pub labels: Vec<RowLabel>,
}

impl ConstraintBlock {
    pub fn n_rows(&self) -> usize {
        self.matrix.n_rows()
    }

    /// Row name used in exported programs.
    pub fn row_name(&self, r: usize) -> String {
        match (self.kind, self.labels[r]) {
            (_, RowLabel::Keyframe(kf)) => format!("a_{kf}"),
            (BlockKind::DividedImage, RowLabel::Cell { keyframe_id, col, row }) => {
                format!("d_{keyframe_id}_{col}_{row}")
            }
            (_, RowLabel::Cell { keyframe_id, col, row }) => format!("b_{keyframe_id}_{col}_{row}"),
            (_, RowLabel::Voxel([i, j, k])) => format!("c_{i}_{j}_{k}"),
        }
    }

    /// Total slack implied by row counts.
    fn slack_total(&self, counts: &[u32]) -> u64 {
        self.rhs
            .iter()
            .zip(counts)
            .map(|(&b, &c)| b.saturating_sub(c) as u64)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct SparsificationProblem {
    pub variant: Variant,
    /// Landmark ids in index order.
    pub landmark_ids: Vec<u64>,
    pub weight: Vec<f64>,
    pub blocks: Vec<ConstraintBlock>,
}

impl SparsificationProblem {
    pub fn n_landmarks(&self) -> usize {
        self.weight.len()
    }

    pub fn n_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.n_rows()).sum()
    }

    pub fn block(&self, kind: BlockKind) -> Option<&ConstraintBlock> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    /// Checks weights and block shapes.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_landmarks();
        if self.landmark_ids.len() != n {
            return Err(Error::Validation("landmark id list does not match weights".into()));
        }
        if let Some(j) = self.weight.iter().position(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(Error::Validation(format!(
                "weight of landmark index {j} must be finite and positive"
            )));
        }
        for b in &self.blocks {
            if b.matrix.n_cols() != n || b.rhs.len() != b.n_rows() || b.labels.len() != b.n_rows() {
                return Err(Error::Validation(format!("{:?} block has inconsistent shape", b.kind)));
            }
            if !(b.penalty >= 0.0 && b.penalty.is_finite()) {
                return Err(Error::Validation(format!("{:?} block penalty must be non-negative", b.kind)));
            }
            if b.slack == SlackKind::Binary && b.rhs.iter().any(|&r| r > 1) {
                return Err(Error::Validation("binary slack requires rhs <= 1".into()));
            }
        }
        Ok(())
    }

    /// Objective at `x` with every slack at its smallest feasible value.
    pub fn objective_value(&self, x: &[bool]) -> f64 {
        assert_eq!(x.len(), self.n_landmarks(), "selection length mismatch");
        let mut value: f64 = self
            .weight
            .iter()
            .zip(x)
            .filter(|(_, &s)| s)
            .map(|(q, _)| q)
            .sum();
        for b in &self.blocks {
            if b.penalty == 0.0 {
                continue;
            }
            let counts = b.matrix.count_selected(x);
            value += b.penalty * b.slack_total(&counts) as f64;
        }
        value
    }

    /// Objective at `x = 0`: every slack at its rhs.
    pub fn empty_selection_value(&self) -> f64 {
        self.objective_value(&vec![false; self.n_landmarks()])
    }
}

/// Cost of selecting each landmark.
pub fn landmark_weights(map: &Map, scheme: WeightScheme) -> Vec<f64> {
    match scheme {
        WeightScheme::Uniform => vec![1.0; map.n_landmarks()],
        WeightScheme::InverseMatch => {
            let min_count = map
                .landmarks()
                .iter()
                .map(|l| l.match_count)
                .min()
                .unwrap_or(0);
            map.landmarks()
                .iter()
                .map(|l| (1.0 + min_count as f64) / (1.0 + l.match_count as f64))
                .collect()
        }
    }
}

/// Visibility regions, 3D grid and valid cells of a map.
#[derive(Debug, Clone)]
pub struct SpaceGeometry {
    pub regions: Vec<Option<VisibilityRegion>>,
    pub grid: Grid3DConfig,
    pub valid: ValidCells,
}

impl SpaceGeometry {
    pub fn compute(map: &Map, params: &Grid3DParams, k2: u32, margins: &VisibilityMargins) -> Result<Self> {
        let regions = fit_all(map, margins);
        let grid = Grid3DConfig::for_map(map, &regions, params.resolution, params.bounds, params.cell_cap)?;
        let valid = valid_cells(map, &regions, &grid, k2, None);
        Ok(SpaceGeometry {
            regions,
            grid,
            valid,
        })
    }
}

/// Builds the program for `params.variant`.
pub fn build_problem(map: &Map, params: &MethodParams) -> Result<SparsificationProblem> {
    params.validate()?;
    let space = match (params.variant, &params.grid3d) {
        (Variant::Ours3D, Some(g)) => Some(SpaceGeometry::compute(map, g, params.k2, &params.margins)?),
        _ => None,
    };
    build_problem_with(map, params, space.as_ref())
}

/// Like [`build_problem`] but reuses precomputed 3D geometry.
pub fn build_problem_with(
    map: &Map,
    params: &MethodParams,
    space: Option<&SpaceGeometry>,
) -> Result<SparsificationProblem> {
    params.validate()?;
    for c in map.cameras() {
        params.grid2d.check_camera(&c.model)?;
    }
    let mut blocks = Vec::new();

    if params.variant == Variant::Di {
        let occ = occupancy_matrix(map, &params.grid2d);
        let per_cell = params.k1.div_ceil(params.grid2d.cells());
        blocks.push(ConstraintBlock {
            kind: BlockKind::DividedImage,
            rhs: vec![per_cell; occ.matrix.n_rows()],
            penalty: params.lambda1,
            slack: SlackKind::Integer,
            labels: occ
                .labels
                .iter()
                .map(|l| RowLabel::Cell {
                    keyframe_id: l.keyframe_id,
                    col: l.col,
                    row: l.row,
                })
                .collect(),
            matrix: occ.matrix,
        });
    } else {
        let a = map.association_matrix();
        blocks.push(ConstraintBlock {
            kind: BlockKind::Keyframe,
            rhs: vec![params.k1; a.n_rows()],
            penalty: params.lambda1,
            slack: SlackKind::Integer,
            labels: map.keyframes().iter().map(|k| RowLabel::Keyframe(k.id)).collect(),
            matrix: a,
        });
    }

    if matches!(params.variant, Variant::Ours2D | Variant::Ours3D) {
        let occ = occupancy_matrix(map, &params.grid2d);
        blocks.push(ConstraintBlock {
            kind: BlockKind::ImageCell,
            rhs: vec![1; occ.matrix.n_rows()],
            penalty: params.lambda2,
            slack: SlackKind::Binary,
            labels: occ
                .labels
                .iter()
                .map(|l| RowLabel::Cell {
                    keyframe_id: l.keyframe_id,
                    col: l.col,
                    row: l.row,
                })
                .collect(),
            matrix: occ.matrix,
        });
    }

    if params.variant == Variant::Ours3D {
        let space = space.ok_or_else(|| {
            Error::Config("the ours3d method needs 3D grid geometry".into())
        })?;
        blocks.push(ConstraintBlock {
            kind: BlockKind::SpaceCell,
            rhs: vec![params.k2; space.valid.len()],
            penalty: params.lambda3,
            slack: SlackKind::Integer,
            labels: space.valid.cells.iter().map(|c| RowLabel::Voxel(c.index)).collect(),
            matrix: space.valid.matrix.clone(),
        });
    }

    let problem = SparsificationProblem {
        variant: params.variant,
        landmark_ids: map.landmarks().iter().map(|l| l.id).collect(),
        weight: landmark_weights(map, params.weight_scheme),
        blocks,
    };
    problem.validate()?;
    Ok(problem)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    GapLimit,
    TimeLimit,
    NodeLimit,
    Heuristic,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapLimit => "gap-limit",
            SolveStatus::TimeLimit => "time-limit",
            SolveStatus::NodeLimit => "node-limit",
            SolveStatus::Heuristic => "heuristic",
        })
    }
}

/// A binary selection with its objective and the best known lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<bool>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub status: SolveStatus,
    pub nodes: usize,
}

impl Solution {
    pub fn new(x: Vec<bool>, objective: f64, bound: f64, status: SolveStatus, nodes: usize) -> Self {
        let bound = bound.min(objective);
        Solution {
            x,
            objective,
            bound,
            gap: relative_gap(objective, bound),
            status,
            nodes,
        }
    }

    pub fn n_selected(&self) -> usize {
        self.x.iter().filter(|&&s| s).count()
    }
}

pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    ((objective - bound) / objective.abs().max(1.0)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCheck {
    pub kind: BlockKind,
    pub rows: usize,
    /// Sum of implied slacks.
    pub slack_total: u64,
    /// Rows not satisfied without slack.
    pub violated_rows: usize,
    pub penalty_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub ok: bool,
    pub objective: f64,
    pub selection_cost: f64,
    pub blocks: Vec<BlockCheck>,
}

/// Recomputes the objective of `solution.x` and compares it with the reported value.
pub fn check_solution(problem: &SparsificationProblem, solution: &Solution) -> Result<CheckReport> {
    if solution.x.len() != problem.n_landmarks() {
        return Err(Error::Check(format!(
            "selection has {} entries, problem has {} landmarks",
            solution.x.len(),
            problem.n_landmarks()
        )));
    }
    let objective = problem.objective_value(&solution.x);
    let selection_cost: f64 = problem
        .weight
        .iter()
        .zip(&solution.x)
        .filter(|(_, &s)| s)
        .map(|(q, _)| q)
        .sum();
    let mut blocks = Vec::new();
    let mut first_slack_row = None;
    for b in &problem.blocks {
        let counts = b.matrix.count_selected(&solution.x);
        let violated: Vec<usize> = (0..b.n_rows()).filter(|&r| counts[r] < b.rhs[r]).collect();
        if first_slack_row.is_none() {
            if let Some(&r) = violated.first() {
                first_slack_row = Some(format!(
                    "{} (count {}, rhs {})",
                    b.row_name(r),
                    counts[r],
                    b.rhs[r]
                ));
            }
        }
        let slack_total = b.slack_total(&counts);
        blocks.push(BlockCheck {
            kind: b.kind,
            rows: b.n_rows(),
            slack_total,
            violated_rows: violated.len(),
            penalty_cost: b.penalty * slack_total as f64,
        });
    }
    let tol = 1e-6 * objective.abs().max(1.0);
    if !((objective - solution.objective).abs() <= tol) {
        return Err(Error::Check(format!(
            "reported objective {} but the selection evaluates to {objective}; first row carrying slack: {}",
            solution.objective,
            first_slack_row.as_deref().unwrap_or("none")
        )));
    }
    Ok(CheckReport {
        ok: true,
        objective,
        selection_cost,
        blocks,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// N=3, M=2, A=[[1,1,0],[0,1,1]], K1=1, q=1, lambda1=10.
    pub(crate) fn three_landmarks() -> SparsificationProblem {
        SparsificationProblem {
            variant: Variant::Lp,
            landmark_ids: vec![0, 1, 2],
            weight: vec![1.0; 3],
            blocks: vec![ConstraintBlock {
                kind: BlockKind::Keyframe,
                matrix: BinaryMatrix::from_rows(3, vec![vec![0, 1], vec![1, 2]]),
                rhs: vec![1, 1],
                penalty: 10.0,
                slack: SlackKind::Integer,
                labels: vec![RowLabel::Keyframe(0), RowLabel::Keyframe(1)],
            }],
        }
    }

    #[test]
    fn objective_examples() {
        let p = three_landmarks();
        assert_eq!(p.objective_value(&[false, true, false]), 1.0);
        assert_eq!(p.objective_value(&[false, false, false]), 20.0);
        assert_eq!(p.objective_value(&[true, true, true]), 3.0);
        assert_eq!(p.objective_value(&[true, false, false]), 11.0);
    }

    #[test]
    fn exhaustive_optimum_of_three_landmark_instance() {
        let p = three_landmarks();
        let best = (0u32..8)
            .map(|m| {
                let x: Vec<bool> = (0..3).map(|j| m >> j & 1 == 1).collect();
                p.objective_value(&x)
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best, 1.0);
    }

    #[test]
    fn check_detects_corrupted_objective() {
        let p = three_landmarks();
        let good = Solution::new(vec![false, true, false], 1.0, 1.0, SolveStatus::Optimal, 1);
        let report = check_solution(&p, &good).unwrap();
        assert!(report.ok);
        assert_eq!(report.blocks[0].slack_total, 0);
        let bad = Solution {
            objective: 2.0,
            ..good.clone()
        };
        assert!(matches!(check_solution(&p, &bad), Err(Error::Check(_))));
        let partial = Solution::new(vec![true, false, false], 11.0, 0.0, SolveStatus::Heuristic, 0);
        let report = check_solution(&p, &partial).unwrap();
        assert_eq!(report.blocks[0].violated_rows, 1);
        assert_eq!(report.blocks[0].penalty_cost, 10.0);
    }

    #[test]
    fn row_names() {
        let p = three_landmarks();
        assert_eq!(p.blocks[0].row_name(1), "a_1");
        let b = ConstraintBlock {
            kind: BlockKind::SpaceCell,
            matrix: BinaryMatrix::from_rows(1, vec![vec![0]]),
            rhs: vec![1],
            penalty: 1.0,
            slack: SlackKind::Integer,
            labels: vec![RowLabel::Voxel([1, 2, 3])],
        };
        assert_eq!(b.row_name(0), "c_1_2_3");
    }

    #[test]
    fn parses_variants() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("qp1".parse::<Variant>().is_err());
    }
}

//! Landmark visibility regions and the 3D validity grid.
//!
//! A landmark is visible from a position when the direction from the landmark
//! to that position lies inside a cone around the mean mapping view direction
//! and the distance lies inside an interval derived from mapping distances.
//! The region is a truncated spherical cone.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_between, Point3};
use crate::map::Map;
use crate::sparse::BinaryMatrix;

/// Added to the largest mapping view angle so that every mapping observation
/// passes the strict angle test.
const ANGLE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityMargins {
    /// Multiplier on the smallest mapping distance.
    pub near: f64,
    /// Multiplier on the largest mapping distance.
    pub far: f64,
    /// Lower bound on the cone half-angle, radians.
    pub theta_floor: f64,
}

impl Default for VisibilityMargins {
    fn default() -> Self {
        VisibilityMargins {
            near: 0.8,
            far: 1.3,
            theta_floor: 10f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityRegion {
    /// Unit mean direction from the landmark toward the observing optical centers.
    pub mean_dir: Vector3<f64>,
    pub theta_th: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Set when the view directions cancel out and the first observation's
    /// direction was used as the axis.
    pub degenerate: bool,
}

/// Fits the visibility region of the landmark at index `lm` from its mapping observations.
pub fn fit_visibility(map: &Map, lm: usize, margins: &VisibilityMargins) -> Result<VisibilityRegion> {
    let landmark = &map.landmarks()[lm];
    let obs = map.landmark_observations(lm);
    if obs.is_empty() {
        return Err(Error::Validation(format!(
            "landmark {} has no observations; its visibility region is undefined",
            landmark.id
        )));
    }
    let p = landmark.position;
    let dirs: Vec<Vector3<f64>> = obs
        .iter()
        .map(|&kf| map.keyframes()[kf as usize].pose.center() - p)
        .collect();

    let mut sum = Vector3::zeros();
    let mut d_lo = f64::INFINITY;
    let mut d_hi = 0.0f64;
    for d in &dirs {
        let dist = d.norm();
        if !(dist > 0.0) {
            return Err(Error::Validation(format!(
                "landmark {} coincides with an observing optical center",
                landmark.id
            )));
        }
        sum += d / dist;
        d_lo = d_lo.min(dist);
        d_hi = d_hi.max(dist);
    }

    let (mean_dir, degenerate) = match sum.try_normalize(1e-9 * dirs.len() as f64) {
        Some(m) => (m, false),
        None => (dirs[0].normalize(), true),
    };
    let widest = dirs
        .iter()
        .map(|d| angle_between(&mean_dir, d))
        .fold(0.0f64, f64::max);
    let theta_th = (widest + ANGLE_EPS)
        .max(margins.theta_floor)
        .min(std::f64::consts::PI);

    Ok(VisibilityRegion {
        mean_dir,
        theta_th,
        d_min: margins.near * d_lo,
        d_max: margins.far * d_hi,
        degenerate,
    })
}

/// Regions for every landmark; `None` for landmarks without observations.
pub fn fit_all(map: &Map, margins: &VisibilityMargins) -> Vec<Option<VisibilityRegion>> {
    (0..map.n_landmarks())
        .into_par_iter()
        .map(|lm| fit_visibility(map, lm, margins).ok())
        .collect()
}

/// Whether a landmark at `landmark_pos` is visible from `query_center`.
#[inline]
pub fn is_visible(region: &VisibilityRegion, landmark_pos: &Point3, query_center: &Point3) -> bool {
    let d = query_center - landmark_pos;
    let dist = d.norm();
    if !(dist > region.d_min && dist < region.d_max) {
        return false;
    }
    // a half-angle of pi covers every direction, including the exact antipode
    region.theta_th >= std::f64::consts::PI || angle_between(&region.mean_dir, &d) < region.theta_th
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }
}

/// Grid bounds: explicit box or derived from the map.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Bounds {
    /// Box around all keyframe centers and landmarks, padded by the 5th
    /// percentile of the landmarks' far visibility distances.
    #[default]
    Auto,
    Explicit(Aabb),
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bounds::Auto => write!(f, "auto"),
            Bounds::Explicit(b) => write!(
                f,
                "{},{},{},{},{},{}",
                b.min[0], b.min[1], b.min[2], b.max[0], b.max[1], b.max[2]
            ),
        }
    }
}

impl FromStr for Bounds {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "auto" {
            return Ok(Bounds::Auto);
        }
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bounds must be `auto` or x0,y0,z0,x1,y1,z1, got `{s}`")))?;
        if v.len() != 6 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!(
                "bounds must be `auto` or six finite numbers, got `{s}`"
            )));
        }
        let b = Aabb {
            min: [v[0], v[1], v[2]],
            max: [v[3], v[4], v[5]],
        };
        if (0..3).any(|a| b.max[a] <= b.min[a]) {
            return Err(Error::Config(format!("bounds box `{s}` is empty")));
        }
        Ok(Bounds::Explicit(b))
    }
}

impl TryFrom<String> for Bounds {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Bounds> for String {
    fn from(b: Bounds) -> String {
        b.to_string()
    }
}

pub const DEFAULT_CELL_CAP: u64 = 2_000_000;

/// Regular 3D grid. The upper corner is snapped so that the box holds a whole
/// number of cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3DConfig {
    pub resolution: f64,
    pub bounds: Aabb,
    pub dims: [u32; 3],
}

impl Grid3DConfig {
    pub fn new(resolution: f64, bounds: Aabb, cell_cap: u64) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Config(format!(
                "3D grid resolution must be positive, got {resolution}"
            )));
        }
        if (0..3).any(|a| !(bounds.max[a] > bounds.min[a])) {
            return Err(Error::Config("3D grid bounds are empty".into()));
        }
        let mut dims = [0u32; 3];
        let mut cells: u64 = 1;
        for a in 0..3 {
            let n = ((bounds.max[a] - bounds.min[a]) / resolution).ceil().max(1.0);
            if n > u32::MAX as f64 {
                return Err(Error::GridTooLarge {
                    cells: u64::MAX,
                    cap: cell_cap,
                });
            }
            dims[a] = n as u32;
            cells = cells.saturating_mul(n as u64);
        }
        if cells > cell_cap {
            return Err(Error::GridTooLarge {
                cells,
                cap: cell_cap,
            });
        }
        let mut snapped = bounds;
        for a in 0..3 {
            snapped.max[a] = bounds.min[a] + dims[a] as f64 * resolution;
        }
        Ok(Grid3DConfig {
            resolution,
            bounds: snapped,
            dims,
        })
    }

    /// Resolves `bounds` against the map (for `Bounds::Auto`) and builds the grid.
    pub fn for_map(
        map: &Map,
        regions: &[Option<VisibilityRegion>],
        resolution: f64,
        bounds: Bounds,
        cell_cap: u64,
    ) -> Result<Self> {
        let b = match bounds {
            Bounds::Explicit(b) => b,
            Bounds::Auto => auto_bounds(map, regions)?,
        };
        Grid3DConfig::new(resolution, b, cell_cap)
    }

    pub fn n_cells(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn center(&self, idx: [u32; 3]) -> Point3 {
        Point3::from_fn(|a, _| self.bounds.min[a] + (idx[a] as f64 + 0.5) * self.resolution)
    }

    pub fn cell_volume(&self) -> f64 {
        self.resolution.powi(3)
    }
}

fn auto_bounds(map: &Map, regions: &[Option<VisibilityRegion>]) -> Result<Aabb> {
    let points = map
        .keyframes()
        .iter()
        .map(|k| k.pose.center())
        .chain(map.landmarks().iter().map(|l| l.position));
    let mut b = Aabb {
        min: [f64::INFINITY; 3],
        max: [f64::NEG_INFINITY; 3],
    };
    let mut any = false;
    for p in points {
        any = true;
        for a in 0..3 {
            b.min[a] = b.min[a].min(p[a]);
            b.max[a] = b.max[a].max(p[a]);
        }
    }
    if !any {
        return Err(Error::Config("cannot derive 3D bounds from an empty map".into()));
    }
    let mut far: Vec<f64> = regions.iter().flatten().map(|r| r.d_max).collect();
    far.sort_by(f64::total_cmp);
    let pad = if far.is_empty() {
        1.0
    } else {
        far[(far.len() - 1) * 5 / 100]
    };
    for a in 0..3 {
        b.min[a] -= pad;
        b.max[a] += pad;
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidCell {
    pub index: [u32; 3],
    pub center: Point3,
    /// Landmark ids visible from the cell center, ascending.
    pub visible_landmark_ids: Vec<u64>,
}

/// Valid cells plus the cell-by-landmark visibility matrix (one row per valid cell).
#[derive(Debug, Clone)]
pub struct ValidCells {
    pub cells: Vec<ValidCell>,
    pub matrix: BinaryMatrix,
}

impl ValidCells {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Index range per axis of the cells whose centers may lie in the region of a
/// landmark at `p`: the box around the spherical sector of half-angle
/// `theta_th` and radii `d_min..d_max`.
fn sector_cells(grid: &Grid3DConfig, region: &VisibilityRegion, p: &Point3) -> Option<[(u32, u32); 3]> {
    let mut out = [(0u32, 0u32); 3];
    for a in 0..3 {
        let (u_lo, u_hi) = if region.theta_th >= std::f64::consts::PI {
            (-1.0, 1.0)
        } else {
            let phi = region.mean_dir[a].clamp(-1.0, 1.0).acos();
            let hi = (phi - region.theta_th).max(0.0).cos();
            let lo = -(std::f64::consts::PI - phi - region.theta_th).max(0.0).cos();
            (lo, hi)
        };
        let lo = p[a] + (u_lo * region.d_min).min(u_lo * region.d_max);
        let hi = p[a] + (u_hi * region.d_min).max(u_hi * region.d_max);
        let to_index = |v: f64| (v - grid.bounds.min[a]) / grid.resolution - 0.5;
        // one cell of slack on each side; the exact test happens per cell
        let first = (to_index(lo).ceil() - 1.0).max(0.0);
        let last = (to_index(hi).floor() + 1.0).min(grid.dims[a] as f64 - 1.0);
        if first > last {
            return None;
        }
        out[a] = (first as u32, last as u32);
    }
    Some(out)
}

fn for_each_visible_cell(
    grid: &Grid3DConfig,
    region: &VisibilityRegion,
    p: &Point3,
    mut f: impl FnMut(usize),
) {
    let Some([(i0, i1), (j0, j1), (k0, k1)]) = sector_cells(grid, region, p) else {
        return;
    };
    let [_, ny, nz] = grid.dims;
    for i in i0..=i1 {
        for j in j0..=j1 {
            for k in k0..=k1 {
                if is_visible(region, p, &grid.center([i, j, k])) {
                    f((i as usize * ny as usize + j as usize) * nz as usize + k as usize);
                }
            }
        }
    }
}

/// Scans every grid cell and keeps those whose center sees at least `k2`
/// landmarks. When `selected` is given only selected landmarks count. Cells
/// are listed in lexicographic (i, j, k) order.
pub fn valid_cells(
    map: &Map,
    regions: &[Option<VisibilityRegion>],
    grid: &Grid3DConfig,
    k2: u32,
    selected: Option<&[bool]>,
) -> ValidCells {
    assert_eq!(regions.len(), map.n_landmarks());
    let landmarks: Vec<(usize, VisibilityRegion)> = regions
        .iter()
        .enumerate()
        .filter(|(j, _)| selected.map_or(true, |s| s[*j]))
        .filter_map(|(j, r)| r.map(|r| (j, r)))
        .collect();
    let n_cells = grid.n_cells() as usize;
    let positions = |j: usize| map.landmarks()[j].position;

    let counts = landmarks
        .par_iter()
        .fold(
            || vec![0u32; n_cells],
            |mut acc, (j, r)| {
                for_each_visible_cell(grid, r, &positions(*j), |c| acc[c] += 1);
                acc
            },
        )
        .reduce_with(|mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        })
        .unwrap_or_default();

    let threshold = k2.max(1);
    let mut row_of = vec![u32::MAX; n_cells];
    let mut cells = Vec::new();
    let [_, ny, nz] = grid.dims;
    for (c, &n) in counts.iter().enumerate() {
        if n >= threshold {
            row_of[c] = cells.len() as u32;
            let index = [
                (c / (ny as usize * nz as usize)) as u32,
                ((c / nz as usize) % ny as usize) as u32,
                (c % nz as usize) as u32,
            ];
            cells.push(ValidCell {
                index,
                center: grid.center(index),
                visible_landmark_ids: Vec::with_capacity(n as usize),
            });
        }
    }
    // landmarks in ascending order keep every row sorted
    let mut rows: Vec<Vec<u32>> = cells.iter().map(|c| Vec::with_capacity(c.visible_landmark_ids.capacity())).collect();
    for (j, r) in &landmarks {
        for_each_visible_cell(grid, r, &positions(*j), |c| {
            if row_of[c] != u32::MAX {
                rows[row_of[c] as usize].push(*j as u32);
            }
        });
    }
    for (cell, row) in cells.iter_mut().zip(&rows) {
        cell.visible_landmark_ids = row.iter().map(|&j| map.landmarks()[j as usize].id).collect();
    }
    let matrix = BinaryMatrix::from_rows(map.n_landmarks(), rows);
    ValidCells { cells, matrix }
}
